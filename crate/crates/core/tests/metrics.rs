use std::collections::HashMap;

use proptest::prelude::*;
use protorec::corpus::{Token, Word};
use protorec::metrics::{bcubed_f, bcubed_items, bcubed_score, edit_distance, evaluate, feature_error_rate, FeatureTable, SiteLabel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn w(s: &str) -> Word {
    Word::from_spaced(s)
}

/// Plain exponential recursion, no table.
fn lev_rec(a: &[Token], b: &[Token]) -> usize {
    match (a, b) {
        ([], _) => b.len(),
        (_, []) => a.len(),
        ([x, ra @ ..], [y, rb @ ..]) => {
            let sub = lev_rec(ra, rb) + usize::from(x != y);
            sub.min(lev_rec(ra, b) + 1).min(lev_rec(a, rb) + 1)
        }
    }
}

fn all_words(alphabet: &[&str], max_len: usize) -> Vec<Word> {
    let mut out = vec![Word::new(vec![])];
    let mut frontier = vec![Vec::<Token>::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for prefix in &frontier {
            for s in alphabet {
                let mut v = prefix.clone();
                v.push(Token::new(*s));
                next.push(v);
            }
        }
        out.extend(next.iter().cloned().map(Word::new));
        frontier = next;
    }
    out
}

#[test]
fn edit_distance_matches_exhaustive_recursion() {
    let words = all_words(&["a", "b", "tʰ"], 5);
    assert_eq!(words.len(), 364);
    for x in &words {
        for y in &words {
            assert_eq!(edit_distance(x, y), lev_rec(x.tokens(), y.tokens()), "{x:?} {y:?}");
        }
    }
}

#[test]
fn fer_hand_values() {
    let ft = FeatureTable::default();
    let v = feature_error_rate(&w("k a tʰ o"), &w("k a t o"), &ft).unwrap();
    assert!((v - 1.0 / 96.0).abs() < 1e-12);
    let v = feature_error_rate(&w("k a o"), &w("k a t o"), &ft).unwrap();
    assert!((v - 0.25).abs() < 1e-12);

    let small = FeatureTable::parse_csv("token,f1,f2,f3\na,+,+,+\nb,+,+,-\nc,-,-,-\n").unwrap();
    // best: delete a, substitute b→c at 2/3
    let v = feature_error_rate(&w("a b"), &w("c"), &small).unwrap();
    assert!((v - 5.0 / 3.0).abs() < 1e-12);
    let v = feature_error_rate(&w("a"), &w("b c"), &small).unwrap();
    assert!((v - (1.0 / 3.0 + 1.0) / 2.0).abs() < 1e-12);
    assert!(feature_error_rate(&w("q"), &w("a"), &small).is_err());
}

/// B-cubed by explicit enumeration of item pairs.
fn bcubed_enumerated(items: &[(SiteLabel, SiteLabel)]) -> f64 {
    let n = items.len() as f64;
    let (mut p, mut r) = (0.0, 0.0);
    for (gi, pi) in items {
        let same_pred: Vec<_> = items.iter().filter(|(_, pj)| pj == pi).collect();
        let same_gold: Vec<_> = items.iter().filter(|(gj, _)| gj == gi).collect();
        let both = items.iter().filter(|(gj, pj)| gj == gi && pj == pi).count() as f64;
        p += both / same_pred.len() as f64;
        r += both / same_gold.len() as f64;
    }
    let (p, r) = (p / n, r / n);
    2.0 * p * r / (p + r)
}

#[test]
fn bcubed_hand_values() {
    let preds = vec![w("a b"), w("a a"), w("b")];
    let golds = vec![w("a b"), w("a b"), w("b b")];
    // items (a,a)×2 (b,b)×2 (b,a) (b,-): P = 7/9, R = 7/12, F = 2/3
    let f = bcubed_f(&preds, &golds).unwrap();
    assert!((f - 2.0 / 3.0).abs() < 1e-12, "{f}");
    assert!((bcubed_enumerated(&bcubed_items(&preds, &golds).unwrap()) - f).abs() < 1e-12);
    assert_eq!(bcubed_f(&golds, &golds).unwrap(), 1.0);
    assert_eq!(bcubed_f(&[w("b b")], &[w("a a")]).unwrap(), 1.0);
}

fn random_word(rng: &mut ChaCha8Rng, alphabet: &[&str], max_len: usize) -> Word {
    let n = rng.gen_range(1..=max_len);
    (0..n).map(|_| Token::new(*alphabet.choose(rng).unwrap())).collect()
}

#[test]
fn bcubed_relabel_invariance() {
    let alphabet = ["a", "e", "i", "k", "t", "s"];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let n = rng.gen_range(1..8);
        let golds: Vec<Word> = (0..n).map(|_| random_word(&mut rng, &alphabet, 5)).collect();
        let preds: Vec<Word> = (0..n).map(|_| random_word(&mut rng, &alphabet, 5)).collect();
        let mut image = alphabet.to_vec();
        image.shuffle(&mut rng);
        let map: HashMap<&str, &str> = alphabet.iter().copied().zip(image).collect();
        let items = bcubed_items(&preds, &golds).unwrap();
        let relabeled: Vec<(SiteLabel, SiteLabel)> = items
            .iter()
            .map(|(g, p)| {
                let p = match p {
                    SiteLabel::Sym(t) => SiteLabel::Sym(Token::new(map[t.as_str()])),
                    SiteLabel::Gap => SiteLabel::Gap,
                };
                (g.clone(), p)
            })
            .collect();
        let a = bcubed_f(&preds, &golds).unwrap();
        assert!((a - bcubed_score(&relabeled)).abs() < 1e-12);
        assert!(a > 0.0 && a <= 1.0);
        assert!((bcubed_enumerated(&items) - a).abs() < 1e-12);
    }
}

#[test]
fn bcubed_relabel_invariance_when_alignment_is_forced() {
    // equal lengths over disjoint alphabets: every site is a mismatch, so
    // the alignment is the diagonal before and after renaming
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gold_alpha = ["a", "e", "i"];
    let pred_alpha = ["p", "t", "k"];
    for _ in 0..100 {
        let n = rng.gen_range(1..6);
        let golds: Vec<Word> = (0..n).map(|_| random_word(&mut rng, &gold_alpha, 4)).collect();
        let preds: Vec<Word> = golds.iter().map(|g| (0..g.len()).map(|_| Token::new(*pred_alpha.choose(&mut rng).unwrap())).collect()).collect();
        let mut image = pred_alpha.to_vec();
        image.shuffle(&mut rng);
        let map: HashMap<&str, &str> = pred_alpha.iter().copied().zip(image).collect();
        let relabeled: Vec<Word> = preds.iter().map(|p| p.iter().map(|t| Token::new(map[t.as_str()])).collect()).collect();
        let (a, b) = (bcubed_f(&preds, &golds).unwrap(), bcubed_f(&relabeled, &golds).unwrap());
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn edit_distance_is_a_metric() {
    let alphabet = ["a", "b", "c", "d"];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let (x, y, z) = (random_word(&mut rng, &alphabet, 6), random_word(&mut rng, &alphabet, 6), random_word(&mut rng, &alphabet, 6));
        assert_eq!(edit_distance(&x, &y), edit_distance(&y, &x));
        assert_eq!(edit_distance(&x, &x), 0);
        assert_eq!(edit_distance(&x, &y) == 0, x == y);
        assert!(edit_distance(&x, &z) <= edit_distance(&x, &y) + edit_distance(&y, &z));
    }
}

#[test]
fn every_bundled_segment_has_zero_self_fer() {
    let ft = FeatureTable::default();
    for line in protorec::metrics::DEFAULT_FEATURES_CSV.lines().skip(1) {
        let token = line.split(',').next().unwrap();
        if token.starts_with("mod:") {
            continue;
        }
        let word = Word::new(vec![Token::new(token)]);
        assert_eq!(feature_error_rate(&word, &word, &ft).unwrap(), 0.0, "{token}");
    }
}

proptest! {
    #[test]
    fn per_pair_bounds(p in proptest::collection::vec(0usize..5, 0..7), g in proptest::collection::vec(0usize..5, 1..7)) {
        let alphabet = ["p", "t", "a", "i", "tʰ"];
        let to_word = |v: &[usize]| v.iter().map(|&i| Token::new(alphabet[i])).collect::<Word>();
        let (pw, gw) = (to_word(&p), to_word(&g));
        let bound = p.len().max(g.len()) as f64 / g.len() as f64;
        let ft = FeatureTable::default();
        let r = evaluate(std::slice::from_ref(&pw), std::slice::from_ref(&gw), Some(&ft)).unwrap();
        prop_assert!(r.nped >= 0.0 && r.nped <= bound + 1e-12);
        let fer = r.fer.unwrap();
        prop_assert!(fer >= 0.0 && fer <= bound + 1e-12);
        prop_assert!(fer <= r.nped + 1e-12);
        if fer == 0.0 {
            prop_assert_eq!(pw.len(), gw.len());
        }
    }
}
