//! The six-layer encoder: embedding, local, context and discourse matching,
//! aggregation, and the prediction head.
//!
//! Every matching stage works on the `(turns, words, dim)` stack with the
//! embedding coordinates as channels, so each residual add lines up:
//!
//! ```text
//! local:     G1 = conv1x1(gelu G)          G2 = conv1x1(G1) + G
//!            G3 = conv[k1 x s1](gelu G2)   G4 = conv1x1(G3) + G2
//! context:   G5 = flatten(G4)              G6 = conv[w1](gelu G5)
//!            G7 = reshape(conv[w2](G6)) + G5
//! discourse: G8 = conv[1 x s2](gelu G7)    G9 = conv[s2 x 1](G8)
//!            G10 = conv1x1(G9) + G7
//! aggregate: G11 = maxpool_words(G10)      G12 = conv[w3] along dim, turns as channels
//!            G13 = conv[w4] along turns + G11      O = maxpool_turns(G13)
//! ```

use std::collections::BTreeMap;

use super::params::{stage_enabled, ParamVars, Stage};
use super::ModelConfig;
use crate::data::StackedInstance;
use crate::error::{Error, Result};
use crate::tensor::ops::EmptySlice;
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Tape handles of one forward pass.
pub struct Encoding {
    /// Final representation `O`, shape `(dim)`.
    pub output: Var,
    /// Tag (`G`, `G1`..`G13`, `O`) to value, when capture was requested.
    pub captured: BTreeMap<String, Var>,
}

/// Snapshot of per-layer values for one instance.
#[derive(Debug, Clone)]
pub struct Activations<S = f32> {
    pub layers: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> Activations<S> {
    pub fn from_encoding(tape: &Tape<'_, S>, enc: &Encoding) -> Self {
        Activations {
            layers: enc
                .captured
                .iter()
                .map(|(k, &v)| (k.clone(), tape.value(v).clone()))
                .collect(),
        }
    }

    pub fn get(&self, tag: &str) -> Option<&Tensor<S>> {
        self.layers.get(tag)
    }
}

struct Recorder {
    capture: bool,
    tags: BTreeMap<String, Var>,
}

impl Recorder {
    fn note(&mut self, tag: &str, v: Var) -> Var {
        if self.capture {
            self.tags.insert(tag.to_string(), v);
        }
        v
    }
}

fn check_shape<S: Scalar>(tape: &Tape<'_, S>, v: Var, expected: &[usize], tag: &str) -> Result<()> {
    let got = tape.value(v).shape();
    if got != expected {
        return Err(Error::shape(format!("{tag}: expected {expected:?}, got {got:?}")));
    }
    Ok(())
}

/// Runs the encoder on `input` and returns `O`.
pub fn encode<S: Scalar>(
    tape: &mut Tape<'_, S>,
    params: &ParamVars,
    cfg: &ModelConfig,
    input: &StackedInstance,
    capture: bool,
) -> Result<Encoding> {
    let (t, l, d) = (cfg.turns, cfg.words, cfg.dim);
    if input.layout.turns != t || input.layout.words != l {
        return Err(Error::shape(format!(
            "input layout {}x{} does not match config {t}x{l}",
            input.layout.turns, input.layout.words
        )));
    }
    let mut rec = Recorder {
        capture,
        tags: BTreeMap::new(),
    };
    let raw = tape.embedding(params.embedding, &input.ids, &[t, l])?;
    let mask = tape.constant(input.mask.to_tensor(&[t, l, d])?);
    let g = tape.mul(raw, mask)?;
    let g = rec.note("G", g);

    let g4 = if stage_enabled(cfg, Stage::Local) {
        local_matching(tape, params, g, &mut rec)?
    } else {
        g
    };
    check_shape(tape, g4, &[t, l, d], "G4")?;
    let g7 = if stage_enabled(cfg, Stage::Context) {
        context_matching(tape, params, g4, &mut rec)?
    } else {
        g4
    };
    check_shape(tape, g7, &[t, l, d], "G7")?;
    let g10 = if stage_enabled(cfg, Stage::Discourse) {
        discourse_matching(tape, params, g7, &mut rec)?
    } else {
        g7
    };
    check_shape(tape, g10, &[t, l, d], "G10")?;

    let g11 = tape.maxpool_with(g10, 1, Some(&input.mask), EmptySlice::Zero)?;
    let g11 = rec.note("G11", g11);
    let top = if stage_enabled(cfg, Stage::Aggregate) {
        aggregate(tape, params, g11, &mut rec)?
    } else {
        g11
    };
    check_shape(tape, top, &[t, d], "G13")?;
    let output = tape.maxpool(top, 0, None)?;
    let output = rec.note("O", output);
    check_shape(tape, output, &[d], "O")?;
    Ok(Encoding {
        output,
        captured: rec.tags,
    })
}

fn local_matching<S: Scalar>(
    tape: &mut Tape<'_, S>,
    p: &ParamVars,
    g: Var,
    rec: &mut Recorder,
) -> Result<Var> {
    let (k1, b1) = p.conv(1)?;
    let (k2, b2) = p.conv(2)?;
    let (k3, b3) = p.conv(3)?;
    let (k4, b4) = p.conv(4)?;
    let a = tape.gelu(g);
    let g1 = tape.conv2d_same(a, k1, b1)?;
    let g1 = rec.note("G1", g1);
    let c = tape.conv2d_same(g1, k2, b2)?;
    let g2 = tape.add(c, g)?;
    let g2 = rec.note("G2", g2);
    let a = tape.gelu(g2);
    let g3 = tape.conv2d_same(a, k3, b3)?;
    let g3 = rec.note("G3", g3);
    let c = tape.conv2d_same(g3, k4, b4)?;
    let g4 = tape.add(c, g2)?;
    Ok(rec.note("G4", g4))
}

/// Convolutions over the flattened `(turns * words)` word sequence, so
/// windows cross utterance boundaries.
fn context_matching<S: Scalar>(
    tape: &mut Tape<'_, S>,
    p: &ParamVars,
    g4: Var,
    rec: &mut Recorder,
) -> Result<Var> {
    let shape = tape.value(g4).shape().to_vec();
    let (k5, b5) = p.conv(5)?;
    let (k6, b6) = p.conv(6)?;
    let g5 = tape.reshape(g4, &[shape[0] * shape[1], shape[2]])?;
    let g5 = rec.note("G5", g5);
    let a = tape.gelu(g5);
    let g6 = tape.conv1d_same(a, k5, b5)?;
    let g6 = rec.note("G6", g6);
    let c = tape.conv1d_same(g6, k6, b6)?;
    let sum = tape.add(c, g5)?;
    let g7 = tape.reshape(sum, &shape)?;
    Ok(rec.note("G7", g7))
}

fn discourse_matching<S: Scalar>(
    tape: &mut Tape<'_, S>,
    p: &ParamVars,
    g7: Var,
    rec: &mut Recorder,
) -> Result<Var> {
    let (k7, b7) = p.conv(7)?;
    let (k8, b8) = p.conv(8)?;
    let (k9, b9) = p.conv(9)?;
    let a = tape.gelu(g7);
    let g8 = tape.conv2d_same(a, k7, b7)?;
    let g8 = rec.note("G8", g8);
    let g9 = tape.conv2d_same(g8, k8, b8)?;
    let g9 = rec.note("G9", g9);
    let c = tape.conv2d_same(g9, k9, b9)?;
    let g10 = tape.add(c, g7)?;
    Ok(rec.note("G10", g10))
}

/// `G11 (turns, dim)` to `G13 (turns, dim)`.
fn aggregate<S: Scalar>(
    tape: &mut Tape<'_, S>,
    p: &ParamVars,
    g11: Var,
    rec: &mut Recorder,
) -> Result<Var> {
    let (k10, b10) = p.conv(10)?;
    let (k11, b11) = p.conv(11)?;
    let along_dim = tape.transpose(g11)?;
    let c = tape.conv1d_same(along_dim, k10, b10)?;
    let g12 = tape.transpose(c)?;
    let g12 = rec.note("G12", g12);
    let c = tape.conv1d_same(g12, k11, b11)?;
    let g13 = tape.add(c, g11)?;
    Ok(rec.note("G13", g13))
}

/// Matching probability `sigmoid(w . O + b)`; returns `(probability, O)`.
pub fn score<S: Scalar>(
    tape: &mut Tape<'_, S>,
    params: &ParamVars,
    cfg: &ModelConfig,
    input: &StackedInstance,
) -> Result<(Var, Var)> {
    let enc = encode(tape, params, cfg, input, false)?;
    let dot = tape.dot(params.head_weight, enc.output)?;
    let logit = tape.add(dot, params.head_bias)?;
    Ok((tape.sigmoid(logit), enc.output))
}
