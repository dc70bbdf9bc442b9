//! Fine-tuning with binary cross-entropy, contrastive pretraining,
//! optimizers and the learning-rate schedule.
//!
//! Per-batch gradients are computed over fixed-size chunks of instances.
//! Chunks run under the caller's [`Exec`] policy and are summed in chunk
//! order, so a training run is bit-identical for any thread count.

mod finetune;
mod loss;
mod optim;
mod pretrain;
mod schedule;

pub use finetune::{bce_gradients, finetune_epoch, fit_finetune, FitReport};
pub use loss::{bce_loss, contrastive_loss, contrastive_on_tape};
pub use optim::{
    adam_step, clip_global_norm, global_norm, sgd_step, zero_grads, OptimState, ADAM_BETA1,
    ADAM_BETA2, ADAM_EPS,
};
pub use pretrain::{
    fit_pretrain, pretrain_batch_loss, pretrain_epoch, pretrain_gradients, pretrain_items,
    PretrainItem,
};
pub use schedule::{check_schedule, lr_schedule, LADDER, MILESTONES};

use std::fmt;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::{Gradients, Tensor};
use crate::model::ParamVars;

/// Instances per gradient chunk.
pub const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Contrastive temperature.
    pub tau: f64,
    pub pretrain_lr: f64,
    pub pretrain_batch: usize,
    pub pretrain_epochs: usize,
    /// Fine-tuning learning rates, stepped down at `milestones`.
    pub ladder: Vec<f64>,
    pub milestones: Vec<usize>,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without improvement before stopping.
    pub patience: usize,
    /// Global gradient-norm cap.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau: 0.007,
            pretrain_lr: 1e-3,
            pretrain_batch: 128,
            pretrain_epochs: 10,
            ladder: LADDER.to_vec(),
            milestones: MILESTONES.to_vec(),
            batch_size: 64,
            epochs: 10,
            patience: 3,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid("temperature must be positive"));
        }
        if !(self.pretrain_lr >= 0.0 && self.pretrain_lr.is_finite()) {
            return Err(Error::invalid("pretraining learning rate must be non-negative"));
        }
        if self.batch_size == 0 || self.pretrain_batch == 0 {
            return Err(Error::invalid("batch sizes must be positive"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::invalid("clip norm must be positive"));
        }
        check_schedule(&self.ladder, &self.milestones)
    }
}

/// One line of the training log, written as `key=value` pairs.
#[derive(Debug, Clone, PartialEq)]
pub enum LogRecord {
    Train { epoch: usize, phase: &'static str, loss: f64, lr: f64 },
    Valid { epoch: usize, metric: String, value: f64 },
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogRecord::Train { epoch, phase, loss, lr } => {
                write!(f, "epoch={epoch} phase={phase} split=train loss={loss:.6} lr={lr:e}")
            }
            LogRecord::Valid { epoch, metric, value } => {
                write!(f, "epoch={epoch} split=valid metric={metric} value={value:.6}")
            }
        }
    }
}

/// Leaf gradients of every parameter, zeros where nothing flowed.
pub(crate) fn collect_grads(
    params: &ModelParams,
    vars: &ParamVars,
    grads: &mut Gradients<f32>,
) -> Vec<Tensor<f32>> {
    params
        .tensors()
        .iter()
        .zip(&vars.all)
        .map(|(p, &v)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect()
}

/// Elementwise sum of per-chunk gradient lists, in order.
pub(crate) fn sum_grads(parts: Vec<Vec<Tensor<f32>>>) -> Option<Vec<Tensor<f32>>> {
    let mut it = parts.into_iter();
    let mut acc = it.next()?;
    for part in it {
        for (a, g) in acc.iter_mut().zip(&part) {
            a.add_assign(g);
        }
    }
    Some(acc)
}

/// Applies one optimizer update with clipping.
pub(crate) fn apply_update(
    params: &mut ModelParams,
    mut grads: Vec<Tensor<f32>>,
    state: &mut OptimState,
    lr: f64,
    clip: f64,
    adam: bool,
) -> Result<()> {
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient of `{}` is not finite",
            params.names()[i]
        )));
    }
    clip_global_norm(&mut grads, clip);
    let mut tensors = params.tensors_mut();
    if adam {
        adam_step(&mut tensors, &grads, state, lr)
    } else {
        state.step += 1;
        state.lr = lr;
        sgd_step(&mut tensors, &grads, lr)
    }
}
