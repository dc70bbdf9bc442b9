//! Fully convolutional multi-view response selection.
//!
//! A dialogue context and a candidate response are stacked into a
//! `(turns, words, dim)` tensor and encoded by convolutions over three views
//! (embedding, word, utterance) into a single vector that a linear head scores.
//! The crate carries everything needed to train and evaluate that model on
//! CPU: a small reverse-mode tensor engine, the encoder, data loading,
//! contrastive pretraining, fine-tuning, and ranking metrics.

pub mod bench;
pub mod data;
pub mod error;
pub mod eval;
pub mod exec;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use exec::Exec;
pub use tensor::{Tape, Tensor, Var};
