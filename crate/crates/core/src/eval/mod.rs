//! Grouped candidate ranking and retrieval metrics.

mod metrics;

pub use metrics::{
    compute_metrics, default_metrics, mean_average_precision, mean_reciprocal_rank,
    metric_table, precision_at_1, rank_group, recall_at_k, Metric, MetricReport, RankedGroup,
};

use crate::data::{perturb_shuffle, DialogueInstance, Layout, StackedSet, Vocabulary};
use crate::error::Result;
use crate::exec::Exec;
use crate::model::ModelParams;

/// Scores every candidate of `set` and gathers them into groups in order of
/// first appearance.
pub fn score_set(params: &ModelParams, set: &StackedSet, exec: Exec) -> Result<Vec<RankedGroup>> {
    let scores = params.score_batch(&set.inputs, exec)?;
    Ok(group_scores(
        scores.iter().map(|&s| s as f64),
        &set.labels,
        &set.group_ids,
    ))
}

/// Joins per-candidate scores into [`RankedGroup`]s by group id.
pub fn group_scores(
    scores: impl IntoIterator<Item = f64>,
    labels: &[u8],
    group_ids: &[usize],
) -> Vec<RankedGroup> {
    let mut out: Vec<RankedGroup> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for ((s, &l), &g) in scores.into_iter().zip(labels).zip(group_ids) {
        let at = *index.entry(g).or_insert_with(|| {
            out.push(RankedGroup {
                group_id: g,
                candidates: Vec::new(),
            });
            out.len() - 1
        });
        out[at].candidates.push((s, l));
    }
    out
}

/// Seed for the shuffle applied to one group; every candidate of a group
/// sees the same permuted context.
pub fn group_perturb_seed(seed: u64, group_id: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (group_id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Shuffles each instance's context with its group's seed.
pub fn perturb_corpus(instances: &[DialogueInstance], seed: u64) -> Vec<DialogueInstance> {
    instances
        .iter()
        .map(|i| perturb_shuffle(i, group_perturb_seed(seed, i.group_id)))
        .collect()
}

/// Scores `instances` and reports `metrics`; with `perturb` set, every
/// context is shuffled first.
pub fn evaluate_run(
    params: &ModelParams,
    instances: &[DialogueInstance],
    vocab: &Vocabulary,
    metrics: &[Metric],
    perturb: Option<u64>,
    exec: Exec,
) -> Result<MetricReport> {
    let layout = Layout::from(&params.config);
    let set = match perturb {
        Some(seed) => StackedSet::from_instances(&perturb_corpus(instances, seed), vocab, layout),
        None => StackedSet::from_instances(instances, vocab, layout),
    };
    compute_metrics(&score_set(params, &set, exec)?, metrics)
}

/// Candidate count shared by every group, if uniform.
pub fn uniform_group_size(instances: &[DialogueInstance]) -> Option<usize> {
    let groups = crate::data::groups(instances);
    let n = groups.first()?.len();
    groups.iter().all(|g| g.len() == n).then_some(n)
}
