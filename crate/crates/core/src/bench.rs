//! Inference latency measurement: `warmup` untimed batches, then `runs`
//! timed batches, reported as median and 95th percentile.

use std::fmt;
use std::time::Instant;

use crate::data::StackedInstance;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::ModelParams;

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub mode: Exec,
    pub threads: usize,
    pub batch: usize,
    pub warmup: usize,
    pub runs: usize,
    /// Per-batch wall-clock milliseconds.
    pub median_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
}

impl LatencyReport {
    pub fn per_example_ms(&self) -> f64 {
        self.median_ms / self.batch as f64
    }
}

impl fmt::Display for LatencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            Exec::Sequential => "sequential",
            Exec::Parallel => "parallel",
        };
        write!(
            f,
            "mode={mode} threads={} batch={} warmup={} runs={} median_ms={:.3} p95_ms={:.3} mean_ms={:.3} per_example_ms={:.3}",
            self.threads,
            self.batch,
            self.warmup,
            self.runs,
            self.median_ms,
            self.p95_ms,
            self.mean_ms,
            self.per_example_ms()
        )
    }
}

/// Nearest-rank percentile of ascending `sorted`, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Times `runs` calls of scoring `inputs` as one batch.
pub fn measure_latency(
    params: &ModelParams,
    inputs: &[StackedInstance],
    warmup: usize,
    runs: usize,
    exec: Exec,
) -> Result<LatencyReport> {
    if inputs.is_empty() || runs == 0 {
        return Err(Error::invalid("latency needs a non-empty batch and at least one run"));
    }
    for _ in 0..warmup {
        params.score_batch(inputs, exec)?;
    }
    let mut times = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        let scores = params.score_batch(inputs, exec)?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(scores);
    }
    times.sort_by(f64::total_cmp);
    Ok(LatencyReport {
        mode: exec,
        threads: exec.threads(),
        batch: inputs.len(),
        warmup,
        runs,
        median_ms: percentile(&times, 0.5),
        p95_ms: percentile(&times, 0.95),
        mean_ms: times.iter().sum::<f64>() / runs as f64,
    })
}

/// Machine description recorded next to timings.
pub fn environment() -> Vec<(&'static str, String)> {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    vec![
        ("os", std::env::consts::OS.to_string()),
        ("arch", std::env::consts::ARCH.to_string()),
        ("available_cores", cores.to_string()),
        ("parallel_feature", cfg!(feature = "parallel").to_string()),
        ("version", env!("CARGO_PKG_VERSION").to_string()),
    ]
}
