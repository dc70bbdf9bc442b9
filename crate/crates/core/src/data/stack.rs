use super::{DialogueInstance, Vocabulary, PAD_ID};
use crate::model::ModelConfig;
use crate::tensor::Mask;

/// Utterance slots and tokens per slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub turns: usize,
    pub words: usize,
}

impl From<&ModelConfig> for Layout {
    fn from(cfg: &ModelConfig) -> Self {
        Layout {
            turns: cfg.turns,
            words: cfg.words,
        }
    }
}

/// Token ids of one dialogue laid out as `(turns, words)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackedInstance {
    pub layout: Layout,
    /// Row-major `(turns, words)` ids.
    pub ids: Vec<usize>,
    /// True exactly where `ids` is not padding.
    pub mask: Mask,
}

impl StackedInstance {
    pub fn slot(&self, t: usize) -> &[usize] {
        let w = self.layout.words;
        &self.ids[t * w..(t + 1) * w]
    }

    pub fn is_valid(&self, t: usize, j: usize) -> bool {
        self.mask.data()[t * self.layout.words + j]
    }
}

/// Stacks a context and response: the response takes the last slot, the
/// most recent `turns - 1` context utterances fill the slots before it, and
/// unused leading slots are all padding. Each utterance keeps its last
/// `words` tokens, left-aligned in its slot.
pub fn stack_instance(inst: &DialogueInstance, vocab: &Vocabulary, layout: Layout) -> StackedInstance {
    stack_utterances(&inst.context, Some(&inst.response), vocab, layout)
}

/// General form of [`stack_instance`]. With `response = None` the last slot
/// stays empty; pass an empty `context` for a response-only stack.
pub fn stack_utterances(
    context: &[Vec<String>],
    response: Option<&[String]>,
    vocab: &Vocabulary,
    layout: Layout,
) -> StackedInstance {
    let mut ids = vec![PAD_ID; layout.turns * layout.words];
    for (cell, tok) in placements(context, response, layout) {
        ids[cell] = vocab.id(tok);
    }
    let mask = Mask::new(
        &[layout.turns, layout.words],
        ids.iter().map(|&id| id != PAD_ID).collect(),
    )
    .expect("layout dims are positive");
    StackedInstance { layout, ids, mask }
}

/// The raw tokens at each `(turns, words)` cell of [`stack_instance`]'s
/// layout; `None` where the stack is padding.
pub fn stacked_tokens(inst: &DialogueInstance, layout: Layout) -> Vec<Option<&str>> {
    let mut cells = vec![None; layout.turns * layout.words];
    for (cell, tok) in placements(&inst.context, Some(&inst.response), layout) {
        cells[cell] = Some(tok.as_str());
    }
    cells
}

fn placements<'a>(
    context: &'a [Vec<String>],
    response: Option<&'a [String]>,
    layout: Layout,
) -> Vec<(usize, &'a String)> {
    let Layout { turns, words } = layout;
    let mut out = Vec::new();
    let mut place = |slot: usize, utt: &'a [String]| {
        let keep = &utt[utt.len().saturating_sub(words)..];
        out.extend(keep.iter().enumerate().map(|(j, tok)| (slot * words + j, tok)));
    };
    if let Some(r) = response {
        place(turns - 1, r);
    }
    let ctx_slots = turns - 1;
    let recent = &context[context.len().saturating_sub(ctx_slots)..];
    let first = ctx_slots - recent.len();
    for (i, utt) in recent.iter().enumerate() {
        place(first + i, utt);
    }
    out
}

/// Stacked candidates with their labels and groups, ready for scoring or
/// training.
#[derive(Debug, Clone)]
pub struct StackedSet {
    pub inputs: Vec<StackedInstance>,
    pub labels: Vec<u8>,
    pub group_ids: Vec<usize>,
}

impl StackedSet {
    pub fn from_instances(instances: &[DialogueInstance], vocab: &Vocabulary, layout: Layout) -> Self {
        StackedSet {
            inputs: instances.iter().map(|i| stack_instance(i, vocab, layout)).collect(),
            labels: instances.iter().map(|i| i.label).collect(),
            group_ids: instances.iter().map(|i| i.group_id).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Padded ids and masks for a set of candidates.
#[derive(Debug, Clone)]
pub struct Batch {
    pub layout: Layout,
    /// `(batch, turns, words)` ids.
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
    pub labels: Vec<u8>,
    pub group_ids: Vec<usize>,
}

impl Batch {
    pub fn from_instances(
        instances: &[DialogueInstance],
        vocab: &Vocabulary,
        layout: Layout,
    ) -> Batch {
        let mut b = Batch {
            layout,
            ids: Vec::new(),
            mask: Vec::new(),
            labels: Vec::new(),
            group_ids: Vec::new(),
        };
        for inst in instances {
            let s = stack_instance(inst, vocab, layout);
            b.ids.extend_from_slice(&s.ids);
            b.mask.extend_from_slice(s.mask.data());
            b.labels.push(inst.label);
            b.group_ids.push(inst.group_id);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.len(), self.layout.turns, self.layout.words]
    }

    pub fn instance(&self, b: usize) -> StackedInstance {
        let n = self.layout.turns * self.layout.words;
        let ids = self.ids[b * n..(b + 1) * n].to_vec();
        let mask = Mask::new(
            &[self.layout.turns, self.layout.words],
            self.mask[b * n..(b + 1) * n].to_vec(),
        )
        .expect("layout dims are positive");
        StackedInstance {
            layout: self.layout,
            ids,
            mask,
        }
    }
}
