//! Supervised protoform reconstruction.
//!
//! A Transformer encoder-decoder reads the concatenated daughter reflexes of
//! a cognate set, with positional encodings restarted per daughter and an
//! additive embedding per daughter language, and decodes the protoform.
//! Around it sit the pieces needed to run and judge that model: dataset
//! handling, a small reverse-mode autodiff engine, evaluation metrics,
//! non-neural baselines, and tools for reading phylogenetic signal out of the
//! learned language embeddings.

pub mod baselines;
pub mod corpus;
pub mod metrics;
pub mod phylo;
pub mod synth;
pub mod tensor;
pub mod transformer;
