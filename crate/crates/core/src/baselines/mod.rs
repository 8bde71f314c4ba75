//! Non-neural reference reconstructors: a random daughter, the majority
//! syllable constituents, and classifiers over aligned correspondence sites.

mod align;
mod classifier;
mod majority;
mod random;

pub use align::{align_cognate_set, align_cognates, AlignedColumn, AlignedSet, AlignedSiteMatrix, Cell, ContextFeatures, PosBucket};
pub use classifier::{
    reconstruct_with_classifier, train_site_classifier, ClassifierKind, ContextConfig, LinearClassifier, PatternClassifier,
    SiteClassifier,
};
pub use majority::{majority_constituent, parse_syllable, MajorityConstituent, SyllableParse, MONOSYLLABIC_SHARE};
pub use random::random_daughter;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("cognate set {0:?} has no daughter forms")]
    NoDaughters(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("no daughter form of cognate set {0:?} parses as a syllable")]
    Unparseable(String),
    #[error("no aligned sites to train on")]
    NoSites,
}
