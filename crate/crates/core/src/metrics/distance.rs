use crate::corpus::{Token, Word};

/// Unit-cost Levenshtein distance over tokens.
pub fn edit_distance(a: &Word, b: &Word) -> usize {
    let (a, b) = (a.tokens(), b.tokens());
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// One step of an alignment turning a prediction into its gold form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EditOp {
    Match(Token),
    Substitute { pred: Token, gold: Token },
    /// A predicted token with no gold counterpart.
    Delete(Token),
    /// A gold token missing from the prediction.
    Insert(Token),
}

/// Full cost table for turning `a` into `b` with the given substitution cost
/// and unit indels.
pub(crate) fn cost_table<F>(a: &[Token], b: &[Token], mut sub_cost: F) -> Vec<Vec<f64>>
where
    F: FnMut(usize, usize) -> f64,
{
    let mut d = vec![vec![0.0; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i as f64;
    }
    for j in 0..=b.len() {
        d[0][j] = j as f64;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + sub_cost(i - 1, j - 1);
            d[i][j] = sub.min(d[i - 1][j] + 1.0).min(d[i][j - 1] + 1.0);
        }
    }
    d
}

/// Pairs of aligned positions from an optimal unit-cost alignment of `a`
/// against `b`. Backtracking prefers the diagonal, then a gap in `b`, then a
/// gap in `a`.
pub(crate) fn align_positions(a: &[Token], b: &[Token]) -> Vec<(Option<usize>, Option<usize>)> {
    let d = cost_table(a, b, |i, j| if a[i] == b[j] { 0.0 } else { 1.0 });
    let (mut i, mut j) = (a.len(), b.len());
    let mut out = Vec::with_capacity(i.max(j));
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let c = if a[i - 1] == b[j - 1] { 0.0 } else { 1.0 };
            if d[i][j] == d[i - 1][j - 1] + c {
                out.push((Some(i - 1), Some(j - 1)));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[i][j] == d[i - 1][j] + 1.0 {
            out.push((Some(i - 1), None));
            i -= 1;
        } else {
            out.push((None, Some(j - 1)));
            j -= 1;
        }
    }
    out.reverse();
    out
}

/// One optimal edit script from `pred` to `gold`, ties broken as
/// substitution, then deletion, then insertion.
pub fn edit_script(pred: &Word, gold: &Word) -> Vec<EditOp> {
    let (p, g) = (pred.tokens(), gold.tokens());
    align_positions(p, g)
        .into_iter()
        .map(|pair| match pair {
            (Some(i), Some(j)) if p[i] == g[j] => EditOp::Match(p[i].clone()),
            (Some(i), Some(j)) => EditOp::Substitute { pred: p[i].clone(), gold: g[j].clone() },
            (Some(i), None) => EditOp::Delete(p[i].clone()),
            (None, Some(j)) => EditOp::Insert(g[j].clone()),
            (None, None) => unreachable!("alignment step with no tokens"),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Word {
        Word::from_spaced(s)
    }

    #[test]
    fn basics() {
        assert_eq!(edit_distance(&w("k a t o"), &w("k a t o")), 0);
        assert_eq!(edit_distance(&w("k a t"), &w("k a t o")), 1);
        assert_eq!(edit_distance(&w(""), &w("a b")), 2);
        assert_eq!(edit_distance(&w("tʰ a"), &w("t a")), 1);
    }

    #[test]
    fn script_prefers_substitution() {
        let ops = edit_script(&w("a"), &w("b"));
        assert_eq!(ops, vec![EditOp::Substitute { pred: "a".into(), gold: "b".into() }]);
        let ops = edit_script(&w("a"), &w("a b"));
        assert_eq!(ops, vec![EditOp::Match("a".into()), EditOp::Insert("b".into())]);
        let ops = edit_script(&w("a b c"), &w("a c"));
        assert_eq!(ops.iter().filter(|o| matches!(o, EditOp::Delete(_))).count(), 1);
    }

    #[test]
    fn script_cost_equals_distance() {
        let pairs = [("a b c d", "b c a"), ("x y", "y x y"), ("", "q"), ("m a n o", "m a")];
        for (p, g) in pairs {
            let cost = edit_script(&w(p), &w(g)).iter().filter(|o| !matches!(o, EditOp::Match(_))).count();
            assert_eq!(cost, edit_distance(&w(p), &w(g)));
        }
    }
}
