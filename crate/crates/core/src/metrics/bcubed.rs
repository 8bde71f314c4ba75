use std::collections::HashMap;
use std::hash::Hash;

use super::distance::align_positions;
use super::{check_lengths, MetricsError};
use crate::corpus::{Token, Word};

/// Label of one side of an aligned site.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SiteLabel {
    Sym(Token),
    Gap,
}

/// Aligned `(gold, pred)` sites of one pair under unit-cost global alignment.
pub fn aligned_sites(pred: &Word, gold: &Word) -> Vec<(SiteLabel, SiteLabel)> {
    let label = |w: &Word, i: Option<usize>| i.map_or(SiteLabel::Gap, |i| SiteLabel::Sym(w.tokens()[i].clone()));
    align_positions(gold.tokens(), pred.tokens())
        .into_iter()
        .map(|(g, p)| (label(gold, g), label(pred, p)))
        .collect()
}

/// All aligned sites pooled across the prediction set.
pub fn bcubed_items(preds: &[Word], golds: &[Word]) -> Result<Vec<(SiteLabel, SiteLabel)>, MetricsError> {
    check_lengths(preds.len(), golds.len())?;
    Ok(preds.iter().zip(golds).flat_map(|(p, g)| aligned_sites(p, g)).collect())
}

/// B-cubed F score of the pooled aligned sites, treating gold labels as the
/// reference clustering and predicted labels as the candidate clustering.
///
/// The score of a fixed set of sites is invariant under renaming predicted
/// symbols; renaming can still change which sites the alignment produces.
pub fn bcubed_f(preds: &[Word], golds: &[Word]) -> Result<f64, MetricsError> {
    Ok(bcubed_score(&bcubed_items(preds, golds)?))
}

/// B-cubed F score of labeled `(gold, pred)` items; 1.0 when there are none.
pub fn bcubed_score<L: Eq + Hash>(items: &[(L, L)]) -> f64 {
    if items.is_empty() {
        return 1.0;
    }
    let mut joint: HashMap<(&L, &L), usize> = HashMap::new();
    let mut by_gold: HashMap<&L, usize> = HashMap::new();
    let mut by_pred: HashMap<&L, usize> = HashMap::new();
    // summed in first-seen order so the float result does not depend on hashing
    let mut order = Vec::new();
    for (g, p) in items {
        let c = joint.entry((g, p)).or_default();
        if *c == 0 {
            order.push((g, p));
        }
        *c += 1;
        *by_gold.entry(g).or_default() += 1;
        *by_pred.entry(p).or_default() += 1;
    }
    let n = items.len() as f64;
    let (mut precision, mut recall) = (0.0, 0.0);
    for (g, p) in order {
        let c = joint[&(g, p)] as f64;
        precision += c * c / by_pred[p] as f64;
        recall += c * c / by_gold[g] as f64;
    }
    precision /= n;
    recall /= n;
    2.0 * precision * recall / (precision + recall)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ws(v: &[&str]) -> Vec<Word> {
        v.iter().map(|s| Word::from_spaced(s)).collect()
    }

    #[test]
    fn identical_is_one() {
        let g = ws(&["k a t o", "m a n o"]);
        assert_eq!(bcubed_f(&g, &g).unwrap(), 1.0);
    }

    #[test]
    fn consistent_relabel_is_one() {
        assert_eq!(bcubed_f(&ws(&["b b"]), &ws(&["a a"])).unwrap(), 1.0);
    }

    #[test]
    fn gaps_get_their_own_label() {
        let sites = aligned_sites(&Word::from_spaced("a"), &Word::from_spaced("a b"));
        assert_eq!(sites[1], (SiteLabel::Sym("b".into()), SiteLabel::Gap));
    }
}
