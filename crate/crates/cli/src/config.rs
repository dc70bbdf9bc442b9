//! Flat `key=value` run configuration.
//!
//! Every key has a default; a config file and command-line flags may
//! override any of them. Unknown keys are rejected.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use convmatch::data::SynthConfig;
use convmatch::eval::Metric;
use convmatch::model::{Ablation, ModelConfig};
use convmatch::train::TrainConfig;
use convmatch::Exec;

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("train", "training corpus (TSV)"),
    ("valid", "validation corpus (TSV)"),
    ("test", "test corpus (TSV)"),
    ("out", "output directory"),
    ("init", "checkpoint to warm-start from"),
    ("resume", "checkpoint with optimizer state to continue training from"),
    ("checkpoint", "checkpoint to evaluate, benchmark or visualize"),
    ("embeddings", "pretrained word vectors (text format)"),
    ("turns", "utterance slots, response included"),
    ("words", "tokens kept per utterance"),
    ("dim", "embedding width"),
    ("k1", "local kernel height"),
    ("s1", "local kernel width"),
    ("s2", "discourse kernel size"),
    ("w1", "first context kernel"),
    ("w2", "second context kernel"),
    ("w3", "aggregation kernel along the embedding axis"),
    ("w4", "aggregation kernel along the utterance axis"),
    ("ablation", "removed stages: none or a list of -LocM,-ConM,-DisM,-Agg"),
    ("tau", "contrastive temperature"),
    ("pretrain_lr", "pretraining SGD learning rate"),
    ("pretrain_batch", "pretraining batch size"),
    ("pretrain_epochs", "maximum pretraining epochs"),
    ("lr_ladder", "fine-tuning learning rates, comma separated"),
    ("milestones", "epochs where the learning rate steps down"),
    ("batch_size", "fine-tuning batch size"),
    ("epochs", "maximum fine-tuning epochs"),
    ("patience", "epochs without improvement before stopping"),
    ("clip_norm", "global gradient norm cap"),
    ("seed", "random seed"),
    ("threads", "worker threads: 0 = all cores, 1 = sequential"),
    ("perturb_seed", "shuffle contexts with this seed when evaluating (none = off)"),
    ("metrics", "auto or a comma list such as R10@1,MAP,MRR,P@1"),
    ("layers", "heatmap layers: all, or a comma list of tags (conv@3, G7, embedding)"),
    ("instance", "row of the test corpus to visualize"),
    ("warmup", "untimed benchmark batches"),
    ("runs", "timed benchmark batches"),
    ("bench_batch", "instances per benchmark batch"),
    ("bench_vocab", "vocabulary size of a fresh benchmark model"),
    ("synth_groups", "synthetic training groups"),
    ("synth_candidates", "candidates per synthetic group"),
    ("synth_vocab", "synthetic vocabulary size"),
    ("synth_overlap", "share of response tokens copied from the context"),
    ("synth_topics", "synthetic topic count"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub out: PathBuf,
    pub init: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub model: ModelConfig,
    pub train_cfg: TrainConfig,
    pub threads: usize,
    pub perturb_seed: Option<u64>,
    /// Empty means the defaults for the corpus' group size.
    pub metrics: Vec<Metric>,
    /// Empty means all eleven convolution outputs.
    pub layers: Vec<String>,
    pub instance: usize,
    pub warmup: usize,
    pub runs: usize,
    pub bench_batch: usize,
    pub bench_vocab: usize,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: None,
            valid: None,
            test: None,
            out: PathBuf::from("runs/default"),
            init: None,
            resume: None,
            checkpoint: None,
            embeddings: None,
            model: ModelConfig::default(),
            train_cfg: TrainConfig::default(),
            threads: 0,
            perturb_seed: None,
            metrics: Vec::new(),
            layers: Vec::new(),
            instance: 0,
            warmup: 5,
            runs: 20,
            bench_batch: 1,
            bench_vocab: 50_000,
            synth: SynthConfig::default(),
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| anyhow!("`{key}`: cannot parse `{value}`: {e}"))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty() && v != "none").then(|| PathBuf::from(v))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or("none".into(), |p| p.display().to_string())
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train_cfg;
        let s = &mut self.synth;
        match key {
            "train" => self.train = path(value),
            "valid" => self.valid = path(value),
            "test" => self.test = path(value),
            "out" => self.out = path(value).ok_or_else(|| anyhow!("`out` cannot be empty"))?,
            "init" => self.init = path(value),
            "resume" => self.resume = path(value),
            "checkpoint" => self.checkpoint = path(value),
            "embeddings" => self.embeddings = path(value),
            "turns" => m.turns = num(key, value)?,
            "words" => m.words = num(key, value)?,
            "dim" => m.dim = num(key, value)?,
            "k1" => m.k1 = num(key, value)?,
            "s1" => m.s1 = num(key, value)?,
            "s2" => m.s2 = num(key, value)?,
            "w1" => m.w1 = num(key, value)?,
            "w2" => m.w2 = num(key, value)?,
            "w3" => m.w3 = num(key, value)?,
            "w4" => m.w4 = num(key, value)?,
            "ablation" => m.ablation = value.parse::<Ablation>()?,
            "tau" => t.tau = num(key, value)?,
            "pretrain_lr" => t.pretrain_lr = num(key, value)?,
            "pretrain_batch" => t.pretrain_batch = num(key, value)?,
            "pretrain_epochs" => t.pretrain_epochs = num(key, value)?,
            "lr_ladder" => t.ladder = list(key, value)?,
            "milestones" => t.milestones = list(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "epochs" => t.epochs = num(key, value)?,
            "patience" => t.patience = num(key, value)?,
            "clip_norm" => t.clip_norm = num(key, value)?,
            "seed" => t.seed = num(key, value)?,
            "threads" => self.threads = num(key, value)?,
            "perturb_seed" => {
                self.perturb_seed = match value.trim() {
                    "" | "none" => None,
                    v => Some(num(key, v)?),
                }
            }
            "metrics" => {
                self.metrics = match value.trim() {
                    "" | "auto" => Vec::new(),
                    v => list(key, v)?,
                }
            }
            "layers" => {
                self.layers = match value.trim() {
                    "" | "all" => Vec::new(),
                    v => v.split(',').map(|s| s.trim().to_string()).collect(),
                }
            }
            "instance" => self.instance = num(key, value)?,
            "warmup" => self.warmup = num(key, value)?,
            "runs" => self.runs = num(key, value)?,
            "bench_batch" => self.bench_batch = num(key, value)?,
            "bench_vocab" => self.bench_vocab = num(key, value)?,
            "synth_groups" => s.n_groups = num(key, value)?,
            "synth_candidates" => s.candidates = num(key, value)?,
            "synth_vocab" => s.vocab_size = num(key, value)?,
            "synth_overlap" => s.overlap_rate = num(key, value)?,
            "synth_topics" => s.topics = num(key, value)?,
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let m = &self.model;
        let t = &self.train_cfg;
        let s = &self.synth;
        Some(match key {
            "train" => show_path(&self.train),
            "valid" => show_path(&self.valid),
            "test" => show_path(&self.test),
            "out" => self.out.display().to_string(),
            "init" => show_path(&self.init),
            "resume" => show_path(&self.resume),
            "checkpoint" => show_path(&self.checkpoint),
            "embeddings" => show_path(&self.embeddings),
            "turns" => m.turns.to_string(),
            "words" => m.words.to_string(),
            "dim" => m.dim.to_string(),
            "k1" => m.k1.to_string(),
            "s1" => m.s1.to_string(),
            "s2" => m.s2.to_string(),
            "w1" => m.w1.to_string(),
            "w2" => m.w2.to_string(),
            "w3" => m.w3.to_string(),
            "w4" => m.w4.to_string(),
            "ablation" => m.ablation.to_string(),
            "tau" => t.tau.to_string(),
            "pretrain_lr" => t.pretrain_lr.to_string(),
            "pretrain_batch" => t.pretrain_batch.to_string(),
            "pretrain_epochs" => t.pretrain_epochs.to_string(),
            "lr_ladder" => join(&t.ladder),
            "milestones" => join(&t.milestones),
            "batch_size" => t.batch_size.to_string(),
            "epochs" => t.epochs.to_string(),
            "patience" => t.patience.to_string(),
            "clip_norm" => t.clip_norm.to_string(),
            "seed" => t.seed.to_string(),
            "threads" => self.threads.to_string(),
            "perturb_seed" => self.perturb_seed.map_or("none".into(), |s| s.to_string()),
            "metrics" if self.metrics.is_empty() => "auto".into(),
            "metrics" => join(&self.metrics),
            "layers" if self.layers.is_empty() => "all".into(),
            "layers" => self.layers.join(","),
            "instance" => self.instance.to_string(),
            "warmup" => self.warmup.to_string(),
            "runs" => self.runs.to_string(),
            "bench_batch" => self.bench_batch.to_string(),
            "bench_vocab" => self.bench_vocab.to_string(),
            "synth_groups" => s.n_groups.to_string(),
            "synth_candidates" => s.candidates.to_string(),
            "synth_vocab" => s.vocab_size.to_string(),
            "synth_overlap" => s.overlap_rate.to_string(),
            "synth_topics" => s.topics.to_string(),
            _ => return None,
        })
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected key=value", origin.display(), i + 1))?;
            self.set(k.trim(), v.trim())
                .with_context(|| format!("{}:{}", origin.display(), i + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        self.apply_text(&text, path)
    }

    /// Every key with its resolved value, one `key=value` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, _) in KEYS {
            let _ = writeln!(out, "{k}={}", self.get(k).expect("listed key"));
        }
        out
    }

    pub fn exec(&self) -> Exec {
        if self.threads == 1 {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train_cfg.validate()?;
        Ok(())
    }
}
