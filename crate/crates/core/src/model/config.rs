use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which encoder stages are removed. A removed matching stage is the
/// identity; a removed aggregation stage leaves plain two-axis max-pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct Ablation {
    pub local: bool,
    pub context: bool,
    pub discourse: bool,
    pub aggregate: bool,
}

impl Ablation {
    pub const NONE: Ablation = Ablation {
        local: false,
        context: false,
        discourse: false,
        aggregate: false,
    };

    pub const ALL: Ablation = Ablation {
        local: true,
        context: true,
        discourse: true,
        aggregate: true,
    };

    /// The full model followed by each single-stage ablation.
    pub fn variants() -> [(&'static str, Ablation); 5] {
        let one = |f: fn(&mut Ablation)| {
            let mut a = Ablation::NONE;
            f(&mut a);
            a
        };
        [
            ("full", Ablation::NONE),
            ("-LocM", one(|a| a.local = true)),
            ("-ConM", one(|a| a.context = true)),
            ("-DisM", one(|a| a.discourse = true)),
            ("-Agg", one(|a| a.aggregate = true)),
        ]
    }

    pub fn is_none(&self) -> bool {
        *self == Ablation::NONE
    }

    pub(crate) fn bits(&self) -> u32 {
        (self.local as u32)
            | (self.context as u32) << 1
            | (self.discourse as u32) << 2
            | (self.aggregate as u32) << 3
    }

    pub(crate) fn from_bits(bits: u32) -> Ablation {
        Ablation {
            local: bits & 1 != 0,
            context: bits & 2 != 0,
            discourse: bits & 4 != 0,
            aggregate: bits & 8 != 0,
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.local, "-LocM"),
            (self.context, "-ConM"),
            (self.discourse, "-DisM"),
            (self.aggregate, "-Agg"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
        if names.is_empty() {
            write!(f, "none")
        } else {
            write!(f, "{}", names.join(","))
        }
    }
}

impl FromStr for Ablation {
    type Err = Error;

    /// Comma-separated list of `-LocM`, `-ConM`, `-DisM`, `-Agg` (leading dash
    /// optional, case-insensitive), or `none`/`full`/empty.
    fn from_str(s: &str) -> Result<Self> {
        let mut a = Ablation::NONE;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.trim_start_matches('-').to_ascii_lowercase().as_str() {
                "none" | "full" => {}
                "locm" => a.local = true,
                "conm" => a.context = true,
                "dism" => a.discourse = true,
                "agg" => a.aggregate = true,
                other => {
                    return Err(Error::invalid(format!(
                        "unknown ablation `{other}` (expected -LocM, -ConM, -DisM, -Agg)"
                    )))
                }
            }
        }
        Ok(a)
    }
}

/// Encoder hyperparameters.
///
/// 2-D kernel sizes are written `(utterance axis) x (word axis)`:
/// `k1 x s1` is the local word-view kernel, `1 x s2` and `s2 x 1` the
/// orthogonal discourse pair. `w1`/`w2` slide along the flattened word
/// sequence, `w3` along the embedding axis, `w4` along the utterance axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    pub turns: usize,
    pub words: usize,
    pub dim: usize,
    pub k1: usize,
    pub s1: usize,
    pub s2: usize,
    pub w1: usize,
    pub w2: usize,
    pub w3: usize,
    pub w4: usize,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            turns: 10,
            words: 50,
            dim: 200,
            k1: 1,
            s1: 3,
            s2: 3,
            w1: 1,
            w2: 5,
            w3: 3,
            w4: 1,
            ablation: Ablation::NONE,
        }
    }
}

impl ModelConfig {
    pub fn with_shape(turns: usize, words: usize, dim: usize) -> Self {
        ModelConfig {
            turns,
            words,
            dim,
            ..Default::default()
        }
    }

    pub fn with_ablation(self, ablation: Ablation) -> Self {
        ModelConfig { ablation, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("turns", self.turns),
            ("words", self.words),
            ("dim", self.dim),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        for (name, k) in self.kernel_sizes() {
            if k == 0 || k % 2 == 0 {
                return Err(Error::invalid(format!(
                    "kernel size {name} must be odd and positive, got {k}"
                )));
            }
        }
        Ok(())
    }

    pub fn kernel_sizes(&self) -> [(&'static str, usize); 7] {
        [
            ("k1", self.k1),
            ("s1", self.s1),
            ("s2", self.s2),
            ("w1", self.w1),
            ("w2", self.w2),
            ("w3", self.w3),
            ("w4", self.w4),
        ]
    }

    pub(crate) fn to_meta(self) -> Vec<f32> {
        [
            self.turns,
            self.words,
            self.dim,
            self.k1,
            self.s1,
            self.s2,
            self.w1,
            self.w2,
            self.w3,
            self.w4,
            self.ablation.bits() as usize,
        ]
        .iter()
        .map(|&v| v as f32)
        .collect()
    }

    pub(crate) fn from_meta(meta: &[f32]) -> Result<Self> {
        if meta.len() != 11 || meta.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
            return Err(Error::Checkpoint("malformed model config record".into()));
        }
        let u = |i: usize| meta[i] as usize;
        let cfg = ModelConfig {
            turns: u(0),
            words: u(1),
            dim: u(2),
            k1: u(3),
            s1: u(4),
            s2: u(5),
            w1: u(6),
            w2: u(7),
            w3: u(8),
            w4: u(9),
            ablation: Ablation::from_bits(u(10) as u32),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
