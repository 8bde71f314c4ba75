use std::collections::HashMap;
use std::fmt;

use super::bcubed::bcubed_f;
use super::distance::{edit_distance, edit_script, EditOp};
use super::features::{feature_error_rate, FeatureTable};
use super::{check_lengths, MetricsError};
use crate::corpus::{Token, Word};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstitutionCount {
    pub pred: Token,
    pub gold: Token,
    pub count: usize,
}

/// Operation tallies from one optimal alignment per pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ErrorBreakdown {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    /// Most frequent first; ties ordered by (pred, gold).
    pub substitution_pairs: Vec<SubstitutionCount>,
}

impl ErrorBreakdown {
    pub fn total(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// Shares of substitutions, deletions and insertions among all errors, or
    /// `None` when there are no errors.
    pub fn shares(&self) -> Option<(f64, f64, f64)> {
        let t = self.total() as f64;
        (t > 0.0).then(|| (self.substitutions as f64 / t, self.deletions as f64 / t, self.insertions as f64 / t))
    }
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub n: usize,
    pub ped: f64,
    pub nped: f64,
    /// Percentage of exact matches.
    pub accuracy: f64,
    /// Absent for orthographic data.
    pub fer: Option<f64>,
    pub bcfs: f64,
    pub breakdown: ErrorBreakdown,
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fer = self.fer.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        write!(
            f,
            "PED {:.4}  NPED {:.4}  Acc {:.2}%  FER {}  BCFS {:.4}",
            self.ped, self.nped, self.accuracy, fer, self.bcfs
        )
    }
}

pub fn error_breakdown(preds: &[Word], golds: &[Word]) -> Result<ErrorBreakdown, MetricsError> {
    check_lengths(preds.len(), golds.len())?;
    let mut out = ErrorBreakdown::default();
    let mut pairs: HashMap<(Token, Token), usize> = HashMap::new();
    for (p, g) in preds.iter().zip(golds) {
        for op in edit_script(p, g) {
            match op {
                EditOp::Match(_) => {}
                EditOp::Substitute { pred, gold } => {
                    out.substitutions += 1;
                    *pairs.entry((pred, gold)).or_default() += 1;
                }
                EditOp::Delete(_) => out.deletions += 1,
                EditOp::Insert(_) => out.insertions += 1,
            }
        }
    }
    let mut pairs: Vec<SubstitutionCount> =
        pairs.into_iter().map(|((pred, gold), count)| SubstitutionCount { pred, gold, count }).collect();
    pairs.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| (&a.pred, &a.gold).cmp(&(&b.pred, &b.gold))));
    out.substitution_pairs = pairs;
    Ok(out)
}

/// All metrics over one prediction set. FER is computed only when a feature
/// table is supplied.
pub fn evaluate(preds: &[Word], golds: &[Word], ft: Option<&FeatureTable>) -> Result<MetricsReport, MetricsError> {
    check_lengths(preds.len(), golds.len())?;
    let n = preds.len() as f64;
    let (mut ped, mut nped, mut exact) = (0.0, 0.0, 0usize);
    for (p, g) in preds.iter().zip(golds) {
        let d = edit_distance(p, g);
        ped += d as f64;
        nped += d as f64 / g.len().max(1) as f64;
        exact += usize::from(d == 0);
    }
    let fer = match ft {
        Some(ft) => {
            let mut total = 0.0;
            for (p, g) in preds.iter().zip(golds) {
                total += feature_error_rate(p, g, ft)?;
            }
            Some(total / n)
        }
        None => None,
    };
    Ok(MetricsReport {
        n: preds.len(),
        ped: ped / n,
        nped: nped / n,
        accuracy: 100.0 * exact as f64 / n,
        fer,
        bcfs: bcubed_f(preds, golds)?,
        breakdown: error_breakdown(preds, golds)?,
    })
}
