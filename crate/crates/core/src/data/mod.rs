//! Corpus ingestion and the `(turns, words)` stacking used by the encoder.

mod embeddings;
mod perturb;
mod stack;
pub mod synth;
mod tsv;
mod vocab;

pub use embeddings::load_embeddings;
pub use perturb::perturb_shuffle;
pub use stack::{stack_instance, stacked_tokens, stack_utterances, Batch, Layout, StackedInstance, StackedSet};
pub use synth::{synth_corpus, SynthConfig, SynthCorpus};
pub use tsv::{format_tsv, load_tsv, parse_tsv, write_tsv};
pub use vocab::{Vocabulary, PAD_ID, UNK_ID};

use std::collections::BTreeMap;

/// One candidate: a context, a response, and whether the response is correct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogueInstance {
    /// Context utterances in chronological order, each a token list.
    pub context: Vec<Vec<String>>,
    pub response: Vec<String>,
    /// 1 for the true response, 0 otherwise.
    pub label: u8,
    /// Shared by all candidates of one context.
    pub group_id: usize,
}

/// Lowercased whitespace split.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Instances grouped by `group_id`, in order of first appearance.
pub fn groups(instances: &[DialogueInstance]) -> Vec<Vec<&DialogueInstance>> {
    let mut order: Vec<usize> = Vec::new();
    let mut by_id: BTreeMap<usize, Vec<&DialogueInstance>> = BTreeMap::new();
    for inst in instances {
        by_id
            .entry(inst.group_id)
            .or_insert_with(|| {
                order.push(inst.group_id);
                Vec::new()
            })
            .push(inst);
    }
    order
        .into_iter()
        .map(|id| by_id.remove(&id).expect("present"))
        .collect()
}
