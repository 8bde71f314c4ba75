//! Evaluation metrics for predicted protoforms: phoneme edit distance and its
//! length-normalized form, exact-match accuracy, feature error rate, B-cubed
//! F score over aligned sites, and a breakdown of edit operations.

mod bcubed;
mod distance;
mod features;
mod report;

pub use bcubed::{aligned_sites, bcubed_f, bcubed_items, bcubed_score, SiteLabel};
pub use distance::{edit_distance, edit_script, EditOp};
pub use features::{feature_error_rate, FeatureTable, DEFAULT_FEATURES_CSV};
pub use report::{error_breakdown, evaluate, ErrorBreakdown, MetricsReport, SubstitutionCount};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{preds} predictions but {golds} gold forms")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("no predictions to evaluate")]
    Empty,
    #[error("token {0:?} has no feature vector")]
    UnknownToken(String),
    #[error("feature table line {line}: {message}")]
    FeatureTable { line: usize, message: String },
}

fn check_lengths(preds: usize, golds: usize) -> Result<(), MetricsError> {
    if preds != golds {
        return Err(MetricsError::LengthMismatch { preds, golds });
    }
    if preds == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}
