//! The convolutional matching model: configuration, parameters, encoder,
//! scoring head, checkpoints and similarity heatmaps.

mod checkpoint;
mod config;
mod encoder;
mod heatmap;
mod params;

pub use checkpoint::{
    checkpoint_bytes, decode_records, encode_records, load_checkpoint, parse_checkpoint,
    save_checkpoint, Checkpoint,
};
pub use config::{Ablation, ModelConfig};
pub use encoder::{encode, score, Activations, Encoding};
pub use heatmap::{heatmap, layer_tags, resolve_layer, similarity_matrix, Heatmap};
pub use params::{
    active_conv_specs, conv_specs, param_count, ConvParams, ConvSpec, ModelParams, ParamCount,
    ParamVars, Stage,
};

use crate::data::StackedInstance;
use crate::error::Result;
use crate::exec::Exec;
use crate::tensor::{Scalar, Tape, Tensor};

/// Inference entry points. Each call builds a private tape, so any number
/// of calls may share one set of parameters.
impl<S: Scalar> ModelParams<S> {
    /// Final representation `O`.
    pub fn encode(&self, input: &StackedInstance) -> Result<Tensor<S>> {
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, self);
        let enc = encoder::encode(&mut tape, &vars, &self.config, input, false)?;
        Ok(tape.value(enc.output).clone())
    }

    /// Matching probability in `(0, 1)`.
    pub fn score(&self, input: &StackedInstance) -> Result<S> {
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, self);
        let (prob, _) = encoder::score(&mut tape, &vars, &self.config, input)?;
        Ok(tape.value(prob).item())
    }

    /// Every intermediate tensor (`G`, `G1`..`G13`, `O`) of one forward pass.
    pub fn activations(&self, input: &StackedInstance) -> Result<Activations<S>> {
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, self);
        let enc = encoder::encode(&mut tape, &vars, &self.config, input, true)?;
        Ok(Activations::from_encoding(&tape, &enc))
    }

    /// Scores `inputs` under `exec`; results keep input order.
    pub fn score_batch(&self, inputs: &[StackedInstance], exec: Exec) -> Result<Vec<S>> {
        exec.map(inputs, |x| self.score(x)).into_iter().collect()
    }
}
