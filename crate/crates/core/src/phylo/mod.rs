//! Phylogenetic probing of learned language embeddings: cosine distances,
//! Ward clustering, majority-rule consensus, Newick I/O and the generalized
//! quartet distance against a reference tree.

mod consensus;
mod distance;
mod newick;
mod quartet;
mod tree;
mod ward;

pub use consensus::{consensus, DEFAULT_THRESHOLD};
pub use distance::{cosine_distance_matrix, DistanceMatrix};
pub use newick::{parse_newick, to_newick};
pub use quartet::{gqd, quartet_topology, QuartetCounts, QuartetTopology};
pub use tree::{Node, Tree};
pub use ward::ward_cluster;

use thiserror::Error;

/// Reference Romance tree shipped with the crate.
pub const ROMANCE_GOLD_NEWICK: &str = include_str!("../../data/romance_gold.nwk");

#[derive(Debug, Error, PartialEq)]
pub enum PhyloError {
    #[error("newick parse error at {position}: {message}")]
    Newick { position: usize, message: String },
    #[error("duplicate leaf label {0:?}")]
    DuplicateLabel(String),
    #[error("embedding for {0:?} has zero norm")]
    ZeroVector(String),
    #[error("embedding for {label:?} has length {got}, expected {expected}")]
    EmbeddingLength { label: String, expected: usize, got: usize },
    #[error("distance matrix is not symmetric at ({i}, {j})")]
    NotSymmetric { i: usize, j: usize },
    #[error("invalid distance matrix: {0}")]
    InvalidMatrix(String),
    #[error("need at least {needed} leaves, got {got}")]
    TooFewLeaves { needed: usize, got: usize },
    #[error("trees do not share the same leaf set")]
    LeafSetMismatch,
    #[error("gold tree resolves no quartets")]
    NoResolvedQuartets,
    #[error("consensus threshold {0} outside [0.5, 1]")]
    Threshold(f64),
    #[error("no trees given")]
    NoTrees,
    #[error("invalid tree: {0}")]
    InvalidTree(String),
}
