use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DialogueInstance;

/// Uniformly random reordering of the context utterances; the response,
/// label and group are untouched. The same seed gives the same order.
pub fn perturb_shuffle(inst: &DialogueInstance, seed: u64) -> DialogueInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = inst.clone();
    out.context.shuffle(&mut rng);
    out
}
