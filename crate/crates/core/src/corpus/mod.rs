//! Cognate-set datasets: parsing, phoneme tokenization, vocabularies,
//! seeded splits and model-ready encoding.

mod dataset;
pub mod phon;
mod tokenize;
mod vocab;

pub use dataset::{parse_dataset, split_dataset, split_sizes, CognateSet, Dataset, LanguageId, ParseOptions, MIN_SPLIT_SIZE};
pub use tokenize::{normalize_form, tokenize_form, ScriptMode, StressMode, Token, TokenizerOptions, Word};
pub use vocab::{build_vocab, encode_cognate_set, EncodedExample, TokenTable, Vocabulary, BOS, EOS, PAD, SPECIALS, UNK};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("empty form")]
    EmptyForm,
    #[error("combining mark {mark:?} at byte {offset} of {form:?} has no base segment")]
    OrphanMark { form: String, mark: char, offset: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset has {n} cognate sets; at least {min} are needed to split")]
    TooSmall { n: usize, min: usize },
    #[error("cognate set {set_id:?} has no daughter forms")]
    NoDaughters { set_id: String },
}
