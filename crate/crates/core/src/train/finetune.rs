use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{apply_update, collect_grads, lr_schedule, sum_grads, LogRecord, OptimState, TrainConfig, CHUNK};
use crate::data::{StackedInstance, StackedSet};
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, score_set, Metric};
use crate::exec::Exec;
use crate::model::{score, ModelParams, ParamVars};
use crate::tensor::{Tape, Tensor};

/// Mean BCE of `inputs` against `labels` and its gradient for every
/// parameter.
pub fn bce_gradients(
    params: &ModelParams,
    inputs: &[&StackedInstance],
    labels: &[f32],
    exec: Exec,
) -> Result<(f64, Vec<Tensor<f32>>)> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} inputs vs {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    let total = inputs.len() as f32;
    let n_chunks = inputs.len().div_ceil(CHUNK);
    let parts = exec.map_range(n_chunks, |c| -> Result<(f64, Vec<Tensor<f32>>)> {
        let range = c * CHUNK..((c + 1) * CHUNK).min(inputs.len());
        let weight = range.len() as f32 / total;
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, params);
        let probs = inputs[range.clone()]
            .iter()
            .map(|x| score(&mut tape, &vars, &params.config, x).map(|(p, _)| p))
            .collect::<Result<Vec<_>>>()?;
        let stacked = tape.stack(&probs)?;
        let mean = tape.bce(stacked, &labels[range])?;
        let loss = tape.scale(mean, weight);
        let mut grads = tape.backward(loss)?;
        Ok((tape.value(loss).item() as f64, collect_grads(params, &vars, &mut grads)))
    });
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(parts.len());
    for part in parts {
        let (l, g) = part?;
        loss += l;
        grads.push(g);
    }
    Ok((loss, sum_grads(grads).expect("at least one chunk")))
}

/// Shuffling order of training items for `epoch`.
pub(crate) fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// One pass of Adam over shuffled batches; returns the mean training loss.
pub fn finetune_epoch(
    params: &mut ModelParams,
    state: &mut OptimState,
    train: &StackedSet,
    cfg: &TrainConfig,
    epoch: usize,
    exec: Exec,
) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let lr = lr_schedule(epoch, &cfg.ladder, &cfg.milestones);
    let order = epoch_order(train.len(), cfg.seed, epoch);
    let mut total = 0.0;
    for batch in order.chunks(cfg.batch_size) {
        let inputs: Vec<&StackedInstance> = batch.iter().map(|&i| &train.inputs[i]).collect();
        let labels: Vec<f32> = batch.iter().map(|&i| f32::from(train.labels[i])).collect();
        let (loss, grads) = bce_gradients(params, &inputs, &labels, exec)?;
        total += loss * batch.len() as f64;
        apply_update(params, grads, state, lr, cfg.clip_norm, true)?;
    }
    Ok(total / train.len() as f64)
}

/// Outcome of [`fit_finetune`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Epoch whose weights were kept, if validation picked one.
    pub best_epoch: Option<usize>,
    pub best_metric: Option<f64>,
    pub metric: Option<Metric>,
    /// Mean training loss per epoch run.
    pub losses: Vec<f64>,
}

/// `Rn@1` on `valid`, with `n` taken from its groups.
pub fn validation_metric(params: &ModelParams, valid: &StackedSet, exec: Exec) -> Result<(Metric, f64)> {
    let groups = score_set(params, valid, exec)?;
    let n = groups
        .first()
        .ok_or_else(|| Error::invalid("empty validation set"))?
        .n();
    let metric = Metric::Recall { n, k: 1 };
    let report = compute_metrics(&groups, &[metric])?;
    Ok((metric, report.values[0].1))
}

/// Fine-tunes from `start_epoch` up to `cfg.epochs`, stopping once the
/// validation metric has not improved for `cfg.patience` epochs. With a
/// validation set, `params` and `state` end at the best epoch.
#[allow(clippy::too_many_arguments)]
pub fn fit_finetune(
    params: &mut ModelParams,
    state: &mut OptimState,
    train: &StackedSet,
    valid: Option<&StackedSet>,
    cfg: &TrainConfig,
    start_epoch: usize,
    exec: Exec,
    log: &mut dyn FnMut(&LogRecord),
) -> Result<FitReport> {
    cfg.validate()?;
    let mut report = FitReport {
        best_epoch: None,
        best_metric: None,
        metric: None,
        losses: Vec::new(),
    };
    if let (Some(v), true) = (valid, start_epoch > 0) {
        let (m, value) = validation_metric(params, v, exec)?;
        report.metric = Some(m);
        report.best_metric = Some(value);
        report.best_epoch = Some(start_epoch - 1);
    }
    let mut best = (params.clone(), state.clone());
    let mut stale = 0;
    for epoch in start_epoch..cfg.epochs {
        let loss = finetune_epoch(params, state, train, cfg, epoch, exec)?;
        let lr = lr_schedule(epoch, &cfg.ladder, &cfg.milestones);
        log(&LogRecord::Train { epoch, phase: "finetune", loss, lr });
        report.losses.push(loss);
        let Some(v) = valid else { continue };
        let (m, value) = validation_metric(params, v, exec)?;
        log(&LogRecord::Valid { epoch, metric: m.to_string(), value });
        report.metric = Some(m);
        if report.best_metric.is_none_or(|b| value > b) {
            report.best_metric = Some(value);
            report.best_epoch = Some(epoch);
            best = (params.clone(), state.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    if valid.is_some() {
        (*params, *state) = best;
    }
    Ok(report)
}
