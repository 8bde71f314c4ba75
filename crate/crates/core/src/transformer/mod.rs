//! Encoder-decoder Transformer over concatenated daughter sequences.
//!
//! Each daughter's tokens get a sinusoidal position signal that restarts at
//! zero for that daughter, plus a learned embedding of the daughter language.
//! The daughters are then concatenated into one encoder input and the decoder
//! generates the protoform autoregressively.

mod check;
mod config;
mod decode;
mod io;
mod model;
mod train;

pub use check::{end_to_end_grad_check, tiny_config, ModelGradCheck, MODEL_GRAD_TOL};
pub use config::TransformerConfig;
pub use decode::{greedy_decode, greedy_decode_batch, max_decode_len, Decoded};
pub use io::{load_trained, save_trained, ModelMeta};
pub use model::{collate, positional_encoding, restarted_positions, Batch, ForwardTrace, Model};
pub use train::{train, train_with_hook, EpochRecord, HookAction, TrainedModel};

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum TransformerError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("source sequence of {len} tokens exceeds the maximum of {max}")]
    TooLong { len: usize, max: usize },
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model metadata: {0}")]
    Meta(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
