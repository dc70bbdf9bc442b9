use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Encoder stage a convolution belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Local,
    Context,
    Discourse,
    Aggregate,
}

/// Shape and placement of one of the eleven encoder convolutions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    /// 1-based position in pipeline order; `conv@{index}`.
    pub index: usize,
    /// Activation tag of the tensor this convolution produces.
    pub output: &'static str,
    pub stage: Stage,
    pub kernel_shape: Vec<usize>,
}

impl ConvSpec {
    pub fn tag(&self) -> String {
        format!("conv@{}", self.index)
    }

    pub fn taps(&self) -> usize {
        let s = &self.kernel_shape;
        s[..s.len() - 2].iter().product()
    }

    pub fn channels_in(&self) -> usize {
        self.kernel_shape[self.kernel_shape.len() - 2]
    }

    pub fn channels_out(&self) -> usize {
        self.kernel_shape[self.kernel_shape.len() - 1]
    }

    pub fn param_count(&self) -> usize {
        self.kernel_shape.iter().product::<usize>() + self.channels_out()
    }
}

/// All eleven convolutions for `cfg`, ignoring ablation.
pub fn conv_specs(cfg: &ModelConfig) -> Vec<ConvSpec> {
    let d = cfg.dim;
    let t = cfg.turns;
    let spec = |index, output, stage, kernel_shape: Vec<usize>| ConvSpec {
        index,
        output,
        stage,
        kernel_shape,
    };
    vec![
        spec(1, "G1", Stage::Local, vec![1, 1, d, d]),
        spec(2, "G2", Stage::Local, vec![1, 1, d, d]),
        spec(3, "G3", Stage::Local, vec![cfg.k1, cfg.s1, d, d]),
        spec(4, "G4", Stage::Local, vec![1, 1, d, d]),
        spec(5, "G6", Stage::Context, vec![cfg.w1, d, d]),
        spec(6, "G7", Stage::Context, vec![cfg.w2, d, d]),
        spec(7, "G8", Stage::Discourse, vec![1, cfg.s2, d, d]),
        spec(8, "G9", Stage::Discourse, vec![cfg.s2, 1, d, d]),
        spec(9, "G10", Stage::Discourse, vec![1, 1, d, d]),
        spec(10, "G12", Stage::Aggregate, vec![cfg.w3, t, t]),
        spec(11, "G13", Stage::Aggregate, vec![cfg.w4, d, d]),
    ]
}

pub(crate) fn stage_enabled(cfg: &ModelConfig, stage: Stage) -> bool {
    let a = cfg.ablation;
    match stage {
        Stage::Local => !a.local,
        Stage::Context => !a.context,
        Stage::Discourse => !a.discourse,
        Stage::Aggregate => !a.aggregate,
    }
}

/// Convolutions actually allocated under `cfg`'s ablation.
pub fn active_conv_specs(cfg: &ModelConfig) -> Vec<ConvSpec> {
    conv_specs(cfg)
        .into_iter()
        .filter(|s| stage_enabled(cfg, s.stage))
        .collect()
}

/// Per-tensor parameter breakdown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCount {
    pub entries: Vec<(String, usize)>,
    pub total: usize,
}

impl ParamCount {
    pub fn embedding(&self) -> usize {
        self.get("embedding")
    }

    pub fn get(&self, name: &str) -> usize {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map_or(0, |(_, c)| *c)
    }

    pub fn non_embedding(&self) -> usize {
        self.total - self.embedding()
    }
}

/// Parameter count for `cfg` and a vocabulary of `vocab` rows:
/// `vocab * dim + sum(kernels + biases) + (dim + 1)`.
pub fn param_count(cfg: &ModelConfig, vocab: usize) -> ParamCount {
    let mut entries = vec![("embedding".to_string(), vocab * cfg.dim)];
    for spec in active_conv_specs(cfg) {
        entries.push((spec.tag(), spec.param_count()));
    }
    entries.push(("head".to_string(), cfg.dim + 1));
    let total = entries.iter().map(|(_, c)| c).sum();
    ParamCount { entries, total }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<S = f32> {
    pub spec: ConvSpec,
    pub kernel: Tensor<S>,
    pub bias: Tensor<S>,
}

/// Learnable weights of the encoder and prediction head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S = f32> {
    pub config: ModelConfig,
    /// `(vocab, dim)`; row 0 is the padding token.
    pub embedding: Tensor<S>,
    /// Active convolutions in pipeline order.
    pub convs: Vec<ConvParams<S>>,
    pub head_weight: Tensor<S>,
    pub head_bias: Tensor<S>,
}

impl<S: Scalar> ModelParams<S> {
    /// All-zero parameters.
    pub fn zeros(cfg: &ModelConfig, vocab: usize) -> Result<Self> {
        cfg.validate()?;
        let convs = active_conv_specs(cfg)
            .into_iter()
            .map(|spec| ConvParams {
                kernel: Tensor::zeros(&spec.kernel_shape),
                bias: Tensor::zeros(&[spec.channels_out()]),
                spec,
            })
            .collect();
        Ok(ModelParams {
            config: *cfg,
            embedding: Tensor::zeros(&[vocab.max(1), cfg.dim]),
            convs,
            head_weight: Tensor::zeros(&[cfg.dim]),
            head_bias: Tensor::zeros(&[1]),
        })
    }

    /// Glorot-uniform kernels and head, zero biases, embedding rows uniform
    /// in `±sqrt(3 / dim)` (unit expected norm) with a zero padding row.
    pub fn init(cfg: &ModelConfig, vocab: usize, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(cfg, vocab)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.dim;
        let emb_bound = (3.0 / d as f64).sqrt();
        fill_uniform(&mut p.embedding, emb_bound, &mut rng);
        p.zero_padding_row();
        for conv in &mut p.convs {
            let taps = conv.spec.taps();
            let fan = taps * (conv.spec.channels_in() + conv.spec.channels_out());
            fill_uniform(&mut conv.kernel, (6.0 / fan as f64).sqrt(), &mut rng);
        }
        fill_uniform(&mut p.head_weight, (6.0 / (d + 1) as f64).sqrt(), &mut rng);
        Ok(p)
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.shape()[0]
    }

    pub fn zero_padding_row(&mut self) {
        let d = self.config.dim;
        self.embedding.data_mut()[..d].fill(S::zero());
    }

    pub fn conv(&self, index: usize) -> Option<&ConvParams<S>> {
        self.convs.iter().find(|c| c.spec.index == index)
    }

    pub fn conv_mut(&mut self, index: usize) -> Option<&mut ConvParams<S>> {
        self.convs.iter_mut().find(|c| c.spec.index == index)
    }

    /// Canonical tensor names, aligned with [`tensors`](Self::tensors).
    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["embedding".to_string()];
        for c in &self.convs {
            names.push(format!("conv{}.kernel", c.spec.index));
            names.push(format!("conv{}.bias", c.spec.index));
        }
        names.push("head.weight".into());
        names.push("head.bias".into());
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor<S>> {
        let mut out = vec![&self.embedding];
        for c in &self.convs {
            out.push(&c.kernel);
            out.push(&c.bias);
        }
        out.push(&self.head_weight);
        out.push(&self.head_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = vec![&mut self.embedding];
        for c in &mut self.convs {
            out.push(&mut c.kernel);
            out.push(&mut c.bias);
        }
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    pub fn numel(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    /// Zeroes every convolution kernel and bias.
    pub fn zero_convs(&mut self) {
        for c in &mut self.convs {
            c.kernel.data_mut().fill(S::zero());
            c.bias.data_mut().fill(S::zero());
        }
    }

    pub fn cast<T: Scalar>(&self) -> ModelParams<T> {
        ModelParams {
            config: self.config,
            embedding: self.embedding.cast(),
            convs: self
                .convs
                .iter()
                .map(|c| ConvParams {
                    spec: c.spec.clone(),
                    kernel: c.kernel.cast(),
                    bias: c.bias.cast(),
                })
                .collect(),
            head_weight: self.head_weight.cast(),
            head_bias: self.head_bias.cast(),
        }
    }

    /// Rebuilds parameters from tensors in canonical order.
    pub fn from_tensors(cfg: &ModelConfig, tensors: Vec<Tensor<S>>) -> Result<Self> {
        let mut p = Self::zeros(cfg, 1)?;
        let expected = p.tensors().len();
        if tensors.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} tensors, found {}",
                tensors.len()
            )));
        }
        let mut it = tensors.into_iter();
        let emb = it.next().expect("len checked");
        if emb.rank() != 2 || emb.shape()[1] != cfg.dim {
            return Err(Error::shape(format!(
                "embedding shape {:?} does not match dim {}",
                emb.shape(),
                cfg.dim
            )));
        }
        p.embedding = emb;
        for slot in p.tensors_mut().into_iter().skip(1) {
            let t = it.next().expect("len checked");
            if t.shape() != slot.shape() {
                return Err(Error::shape(format!(
                    "parameter shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        Ok(p)
    }
}

fn fill_uniform<S: Scalar>(t: &mut Tensor<S>, bound: f64, rng: &mut ChaCha8Rng) {
    for x in t.data_mut() {
        *x = S::from_f64(rng.random_range(-bound..bound));
    }
}

/// Parameter leaves registered on a tape.
pub struct ParamVars {
    pub embedding: Var,
    /// `(kernel, bias)` per conv, indexed by `conv@` number minus one.
    pub convs: [Option<(Var, Var)>; 11],
    pub head_weight: Var,
    pub head_bias: Var,
    /// All leaves in canonical order.
    pub all: Vec<Var>,
}

impl ParamVars {
    pub fn register<'a, S: Scalar>(tape: &mut Tape<'a, S>, params: &'a ModelParams<S>) -> Self {
        let mut all = Vec::new();
        let embedding = tape.param(&params.embedding);
        all.push(embedding);
        let mut convs = [None; 11];
        for c in &params.convs {
            let k = tape.param(&c.kernel);
            let b = tape.param(&c.bias);
            all.push(k);
            all.push(b);
            convs[c.spec.index - 1] = Some((k, b));
        }
        let head_weight = tape.param(&params.head_weight);
        let head_bias = tape.param(&params.head_bias);
        all.push(head_weight);
        all.push(head_bias);
        ParamVars {
            embedding,
            convs,
            head_weight,
            head_bias,
            all,
        }
    }

    pub(crate) fn conv(&self, index: usize) -> Result<(Var, Var)> {
        self.convs[index - 1]
            .ok_or_else(|| Error::invalid(format!("conv@{index} is not allocated")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::Ablation;

    #[test]
    fn count_matches_allocation() {
        let cfg = ModelConfig::with_shape(4, 6, 8);
        for (_, ab) in Ablation::variants() {
            let cfg = cfg.with_ablation(ab);
            let p = ModelParams::<f32>::init(&cfg, 37, 1).unwrap();
            assert_eq!(param_count(&cfg, 37).total, p.numel());
        }
    }

    #[test]
    fn zero_vocab_counts_only_convs_and_head() {
        let cfg = ModelConfig::default();
        let pc = param_count(&cfg, 0);
        assert_eq!(pc.embedding(), 0);
        assert_eq!(pc.total, pc.non_embedding());
    }

    #[test]
    fn each_ablation_is_smaller() {
        let cfg = ModelConfig::default();
        let full = param_count(&cfg, 1000).total;
        for (name, ab) in Ablation::variants().into_iter().skip(1) {
            let n = param_count(&cfg.with_ablation(ab), 1000).total;
            assert!(n < full, "{name}: {n} >= {full}");
        }
    }

    #[test]
    fn init_is_seeded_and_pads_zero() {
        let cfg = ModelConfig::with_shape(3, 4, 5);
        let a = ModelParams::<f32>::init(&cfg, 10, 7).unwrap();
        let b = ModelParams::<f32>::init(&cfg, 10, 7).unwrap();
        let c = ModelParams::<f32>::init(&cfg, 10, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.embedding.data()[..5].iter().all(|&x| x == 0.0));
        assert!(a.convs.iter().all(|c| c.bias.data().iter().all(|&x| x == 0.0)));
        assert_eq!(a.names().len(), a.tensors().len());
    }
}
