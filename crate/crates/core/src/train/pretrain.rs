use super::finetune::epoch_order;
use super::{apply_update, collect_grads, contrastive_on_tape, sum_grads, LogRecord, OptimState, TrainConfig, CHUNK};
use crate::data::{groups, stack_utterances, DialogueInstance, Layout, StackedInstance, Vocabulary};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{encode, ModelParams, ParamVars};
use crate::tensor::{Tape, Tensor, Var};

/// One contrastive training example: the context stacked without a
/// response, its true response stacked alone, and the group's wrong
/// responses stacked alone.
#[derive(Debug, Clone)]
pub struct PretrainItem {
    pub context: StackedInstance,
    pub positive: StackedInstance,
    pub negatives: Vec<StackedInstance>,
}

/// One item per group that has a positive (the first one, if several).
pub fn pretrain_items(instances: &[DialogueInstance], vocab: &Vocabulary, layout: Layout) -> Vec<PretrainItem> {
    let alone = |r: &DialogueInstance| stack_utterances(&[], Some(&r.response), vocab, layout);
    groups(instances)
        .into_iter()
        .filter_map(|g| {
            let pos = g.iter().find(|i| i.label == 1)?;
            Some(PretrainItem {
                context: stack_utterances(&pos.context, None, vocab, layout),
                positive: alone(pos),
                negatives: g.iter().filter(|i| i.label == 0).map(|i| alone(i)).collect(),
            })
        })
        .collect()
}

/// Flattened stacks of a batch: per item the context, the positive, then
/// its own negatives. Returns the stacks and each item's offset.
fn flatten<'a>(items: &[&'a PretrainItem]) -> (Vec<&'a StackedInstance>, Vec<usize>) {
    let mut stacks = Vec::new();
    let mut offsets = Vec::with_capacity(items.len());
    for item in items {
        offsets.push(stacks.len());
        stacks.push(&item.context);
        stacks.push(&item.positive);
        stacks.extend(item.negatives.iter());
    }
    (stacks, offsets)
}

/// Mean contrastive loss over a batch of encodings and its gradient with
/// respect to each encoding. Negatives of item `i` are its own wrong
/// responses plus the true responses of the other items.
fn loss_over_encodings(
    items: &[&PretrainItem],
    offsets: &[usize],
    encodings: &[Tensor<f32>],
    tau: f64,
) -> Result<(f64, Vec<Tensor<f32>>)> {
    let mut tape = Tape::<f64>::new();
    let vars: Vec<Var> = encodings.iter().map(|e| tape.input(e.cast())).collect();
    let mut losses = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let o = offsets[i];
        let mut negs: Vec<Var> = (0..item.negatives.len()).map(|j| vars[o + 2 + j]).collect();
        negs.extend(
            offsets
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &oj)| vars[oj + 1]),
        );
        losses.push(contrastive_on_tape(&mut tape, vars[o], vars[o + 1], &negs, tau)?);
    }
    let stacked = tape.stack(&losses)?;
    let loss = tape.mean(stacked);
    let grads = tape.backward(loss)?;
    let seeds = vars
        .iter()
        .zip(encodings)
        .map(|(&v, e)| grads.get(v).map_or_else(|| Tensor::zeros(e.shape()), |g| g.cast()))
        .collect();
    Ok((tape.value(loss).item(), seeds))
}

/// Mean contrastive loss of a batch under `params`.
pub fn pretrain_batch_loss(params: &ModelParams, items: &[&PretrainItem], tau: f64, exec: Exec) -> Result<f64> {
    let (stacks, offsets) = flatten(items);
    let encodings = exec
        .map(&stacks, |s| params.encode(s))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(loss_over_encodings(items, &offsets, &encodings, tau)?.0)
}

/// Batch loss and parameter gradients.
///
/// Encodings are computed first without gradients; the loss is then
/// differentiated with respect to each encoding, and each encoder pass is
/// replayed to pull that seed back to the parameters.
pub fn pretrain_gradients(
    params: &ModelParams,
    items: &[&PretrainItem],
    tau: f64,
    exec: Exec,
) -> Result<(f64, Vec<Tensor<f32>>)> {
    if items.is_empty() {
        return Err(Error::invalid("empty pretraining batch"));
    }
    let (stacks, offsets) = flatten(items);
    let encodings = exec
        .map(&stacks, |s| params.encode(s))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (loss, seeds) = loss_over_encodings(items, &offsets, &encodings, tau)?;
    let n_chunks = stacks.len().div_ceil(CHUNK);
    let parts = exec.map_range(n_chunks, |c| -> Result<Vec<Tensor<f32>>> {
        let range = c * CHUNK..((c + 1) * CHUNK).min(stacks.len());
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, params);
        let mut total: Option<Var> = None;
        for k in range {
            let enc = encode(&mut tape, &vars, &params.config, stacks[k], false)?;
            let seed = tape.constant(seeds[k].clone());
            let term = tape.dot(seed, enc.output)?;
            total = Some(match total {
                Some(t) => tape.add(t, term)?,
                None => term,
            });
        }
        let mut grads = tape.backward(total.expect("non-empty chunk"))?;
        Ok(collect_grads(params, &vars, &mut grads))
    });
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((loss, sum_grads(parts).expect("at least one chunk")))
}

/// One SGD pass over shuffled batches; returns the mean batch loss.
pub fn pretrain_epoch(
    params: &mut ModelParams,
    state: &mut OptimState,
    items: &[PretrainItem],
    cfg: &TrainConfig,
    epoch: usize,
    exec: Exec,
) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::invalid("no groups with a positive response to pretrain on"));
    }
    let order = epoch_order(items.len(), cfg.seed ^ PRETRAIN_STREAM, epoch);
    let mut total = 0.0;
    for batch in order.chunks(cfg.pretrain_batch) {
        let batch: Vec<&PretrainItem> = batch.iter().map(|&i| &items[i]).collect();
        let (loss, grads) = pretrain_gradients(params, &batch, cfg.tau, exec)?;
        total += loss * batch.len() as f64;
        apply_update(params, grads, state, cfg.pretrain_lr, cfg.clip_norm, false)?;
    }
    Ok(total / items.len() as f64)
}

const PRETRAIN_STREAM: u64 = 0x7072_6574_7261_696e;

/// Pretrains for up to `cfg.pretrain_epochs`, stopping once the epoch loss
/// has not improved for `cfg.patience` epochs. Returns the per-epoch losses.
pub fn fit_pretrain(
    params: &mut ModelParams,
    state: &mut OptimState,
    items: &[PretrainItem],
    cfg: &TrainConfig,
    exec: Exec,
    log: &mut dyn FnMut(&LogRecord),
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut losses = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..cfg.pretrain_epochs {
        let loss = pretrain_epoch(params, state, items, cfg, epoch, exec)?;
        log(&LogRecord::Train {
            epoch,
            phase: "pretrain",
            loss,
            lr: cfg.pretrain_lr,
        });
        losses.push(loss);
        if loss < best {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(losses)
}
