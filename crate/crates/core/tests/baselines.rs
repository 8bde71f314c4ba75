use std::collections::BTreeMap;

use proptest::prelude::*;
use protorec::baselines::{
    align_cognate_set, align_cognates, random_daughter, reconstruct_with_classifier, train_site_classifier, Cell, ClassifierKind,
    ContextConfig,
};
use protorec::corpus::phon::classify;
use protorec::corpus::{split_dataset, CognateSet, Token, Word};
use protorec::metrics::evaluate;
use protorec::synth::{generate, GenerateOptions, RuleSet};

fn pair_cost(a: Option<&Token>, b: Option<&Token>) -> f64 {
    match (a, b) {
        (None, None) => 0.0,
        (Some(_), None) | (None, Some(_)) => 1.0,
        (Some(x), Some(y)) if x == y => 0.0,
        (Some(x), Some(y)) if classify(x.as_str()) == classify(y.as_str()) => 0.5,
        _ => 1.0,
    }
}

fn column_cost(col: &[Option<&Token>]) -> f64 {
    let mut c = 0.0;
    for i in 0..col.len() {
        for j in i + 1..col.len() {
            c += pair_cost(col[i], col[j]);
        }
    }
    c
}

/// Minimum sum-of-pairs cost over every alignment of three rows, by plain
/// recursion over all nonempty column moves.
fn best_msa(rows: [&[Token]; 3]) -> f64 {
    if rows.iter().all(|r| r.is_empty()) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for mask in 1u8..8 {
        let take: Vec<bool> = (0..3).map(|k| mask & (1 << k) != 0).collect();
        if (0..3).any(|k| take[k] && rows[k].is_empty()) {
            continue;
        }
        let col: Vec<Option<&Token>> = (0..3).map(|k| take[k].then(|| &rows[k][0])).collect();
        let rest: [&[Token]; 3] = std::array::from_fn(|k| if take[k] { &rows[k][1..] } else { rows[k] });
        best = best.min(column_cost(&col) + best_msa(rest));
    }
    best
}

fn set(forms: &[&str], proto: &str) -> CognateSet {
    CognateSet {
        set_id: "t".into(),
        proto: Word::from_spaced(proto),
        daughters: forms.iter().enumerate().map(|(i, f)| (i, Word::from_spaced(f))).collect(),
    }
}

#[test]
fn progressive_alignment_matches_exhaustive_optimum_on_toys() {
    let toys: [[&str; 3]; 4] = [
        ["k a t o", "k a t", "g a t o"],
        ["p a n", "p a n", "b a"],
        ["s i l", "s e l a", "s i"],
        ["t a k", "a k", "d a k u"],
    ];
    for forms in toys {
        let cs = set(&forms, "x");
        let aligned = align_cognate_set(&cs, 3, false);
        let got: f64 = aligned
            .columns
            .iter()
            .map(|c| {
                let col: Vec<Option<&Token>> = c.cells.iter().map(|x| if let Cell::Sym(t) = x { Some(t) } else { None }).collect();
                column_cost(&col)
            })
            .sum();
        let words: Vec<Word> = forms.iter().map(|f| Word::from_spaced(f)).collect();
        let expected = best_msa([words[0].tokens(), words[1].tokens(), words[2].tokens()]);
        assert_eq!(got, expected, "{forms:?}");
    }
}

fn rows_of(cs: &CognateSet) -> (Vec<Vec<Cell>>, Vec<Cell>) {
    let a = align_cognate_set(cs, cs.daughters.len(), true);
    let rows = (0..cs.daughters.len()).map(|l| a.columns.iter().map(|c| c.cells[l].clone()).collect()).collect();
    (rows, a.columns.iter().map(|c| c.proto.clone().unwrap()).collect())
}

fn symbols(cells: &[Cell]) -> Word {
    cells.iter().filter_map(|c| if let Cell::Sym(t) = c { Some(t.clone()) } else { None }).collect()
}

proptest! {
    #[test]
    fn alignment_keeps_every_row_in_order(
        forms in proptest::collection::vec(proptest::collection::vec(0usize..6, 1..6), 1..5),
        proto in proptest::collection::vec(0usize..6, 1..6),
    ) {
        let alphabet = ["p", "t", "a", "i", "kʰ", "o"];
        let to_word = |v: &[usize]| v.iter().map(|&i| Token::new(alphabet[i])).collect::<Word>();
        let cs = CognateSet {
            set_id: "p".into(),
            proto: to_word(&proto),
            daughters: forms.iter().enumerate().map(|(i, f)| (i, to_word(f))).collect::<BTreeMap<_, _>>(),
        };
        let (rows, proto_row) = rows_of(&cs);
        for (l, row) in rows.iter().enumerate() {
            prop_assert_eq!(&symbols(row), &cs.daughters[&l]);
        }
        prop_assert_eq!(symbols(&proto_row), cs.proto.clone());
        // no all-gap columns
        for c in 0..proto_row.len() {
            prop_assert!(rows.iter().any(|r| matches!(r[c], Cell::Sym(_))) || matches!(proto_row[c], Cell::Sym(_)));
        }
    }
}

const RULES: &str = "consonants: p t k b d g s z m n\n\
                     vowels: a e i o u\n\
                     proto: p t k s m n a e i o u\n\
                     daughter A\n t > d / V _ V\n k > g / V _ V\n\
                     daughter B\n s > z / # _\n a > e / _ #\n\
                     daughter C\n p > b / V _\n\
                     daughter D\n";

#[test]
fn classifiers_beat_random_daughter_on_regular_data() {
    let ds = generate(&RuleSet::parse(RULES).unwrap(), &GenerateOptions::new(200, 4)).unwrap();
    let (train, _, test) = split_dataset(&ds, 0).unwrap();
    let golds: Vec<Word> = test.sets.iter().map(|s| s.proto.clone()).collect();
    let random: Vec<Word> = test.sets.iter().map(|s| random_daughter(s, 1).unwrap()).collect();
    let random_acc = evaluate(&random, &golds, None).unwrap().accuracy;
    let sites = align_cognates(&train);
    for kind in [ClassifierKind::Pattern, ClassifierKind::Linear] {
        let clf = train_site_classifier(&sites, kind, ContextConfig::ALL, 0).unwrap();
        let preds: Vec<Word> = test.sets.iter().map(|s| reconstruct_with_classifier(&clf, s, 4)).collect();
        let acc = evaluate(&preds, &golds, None).unwrap().accuracy;
        assert!(acc > random_acc, "{kind:?}: {acc} vs random {random_acc}");
    }
}
