use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::align::{align_cognate_set, AlignedColumn, AlignedSiteMatrix, Cell};
use super::BaselineError;
use crate::corpus::{CognateSet, Word};

const LINEAR_EPOCHS: usize = 50;
const LINEAR_LR: f64 = 0.1;
const LINEAR_L2: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Pattern,
    Linear,
}

/// Which context families enter the classifier input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextConfig {
    pub pos: bool,
    pub structure: bool,
    pub edges: bool,
}

impl ContextConfig {
    pub const ALL: ContextConfig = ContextConfig { pos: true, structure: true, edges: true };
    pub const NONE: ContextConfig = ContextConfig { pos: false, structure: false, edges: false };
}

/// Discrete input of one column: one slot per daughter, then the enabled
/// context slots.
fn column_key(col: &AlignedColumn, cfg: ContextConfig) -> Vec<String> {
    let mut key: Vec<String> = col.cells.iter().map(|c| c.text().to_string()).collect();
    if cfg.pos {
        key.push(format!("pos={}", col.context.pos.name()));
    }
    if cfg.structure {
        key.push(format!("str={}", col.context.structure.map_or("-", |s| s.name())));
    }
    if cfg.edges {
        key.push(format!("ini={}", u8::from(col.context.initial)));
        key.push(format!("fin={}", u8::from(col.context.final_)));
    }
    key
}

/// Active sparse feature names of a column. Missing daughters contribute
/// nothing.
fn column_features(col: &AlignedColumn, cfg: ContextConfig) -> Vec<String> {
    let n = col.cells.len();
    column_key(col, cfg)
        .into_iter()
        .enumerate()
        .filter(|(i, v)| *i >= n || v != "?")
        .map(|(i, v)| if i < n { format!("d{i}={v}") } else { v })
        .collect()
}

fn labeled<'a>(sites: &'a AlignedSiteMatrix) -> Vec<(&'a AlignedColumn, &'a Cell)> {
    sites.columns().filter_map(|c| c.proto.as_ref().map(|p| (c, p))).collect()
}

/// Memorizes the majority label of every seen column and backs off to the
/// Hamming-nearest stored columns.
#[derive(Debug, Clone)]
pub struct PatternClassifier {
    context: ContextConfig,
    patterns: BTreeMap<Vec<String>, BTreeMap<Cell, usize>>,
}

fn majority(counts: &BTreeMap<Cell, usize>) -> Cell {
    let best = counts.values().copied().max().unwrap_or(0);
    counts.iter().find(|(_, c)| **c == best).map(|(l, _)| l.clone()).unwrap_or(Cell::Gap)
}

impl PatternClassifier {
    fn fit(sites: &AlignedSiteMatrix, context: ContextConfig) -> Result<Self, BaselineError> {
        let mut patterns: BTreeMap<Vec<String>, BTreeMap<Cell, usize>> = BTreeMap::new();
        for (col, label) in labeled(sites) {
            *patterns.entry(column_key(col, context)).or_default().entry(label.clone()).or_default() += 1;
        }
        if patterns.is_empty() {
            return Err(BaselineError::NoSites);
        }
        Ok(PatternClassifier { context, patterns })
    }

    pub fn predict(&self, col: &AlignedColumn) -> Cell {
        let key = column_key(col, self.context);
        if let Some(counts) = self.patterns.get(&key) {
            return majority(counts);
        }
        let distance = |k: &Vec<String>| k.iter().zip(&key).filter(|(a, b)| a != b).count() + k.len().abs_diff(key.len());
        let best = self.patterns.keys().map(distance).min().unwrap_or(0);
        let mut pooled: BTreeMap<Cell, usize> = BTreeMap::new();
        for (k, counts) in &self.patterns {
            if distance(k) == best {
                for (label, c) in counts {
                    *pooled.entry(label.clone()).or_default() += c;
                }
            }
        }
        majority(&pooled)
    }

    pub fn dump(&self) -> String {
        let mut s = String::from("# pattern classifier: column\tlabel counts\n");
        for (key, counts) in &self.patterns {
            let labels: Vec<String> = counts.iter().map(|(l, c)| format!("{}:{c}", l.text())).collect();
            let _ = writeln!(s, "{}\t{}", key.join(" "), labels.join(" "));
        }
        s
    }
}

/// One-vs-rest linear classifiers trained with the hinge loss by SGD.
#[derive(Debug, Clone)]
pub struct LinearClassifier {
    context: ContextConfig,
    features: HashMap<String, usize>,
    feature_names: Vec<String>,
    labels: Vec<Cell>,
    /// `weights[class][feature]`.
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl LinearClassifier {
    fn fit(sites: &AlignedSiteMatrix, context: ContextConfig, seed: u64) -> Result<Self, BaselineError> {
        let data = labeled(sites);
        if data.is_empty() {
            return Err(BaselineError::NoSites);
        }
        let mut features = HashMap::new();
        let mut feature_names = Vec::new();
        let mut labels: Vec<Cell> = data.iter().map(|(_, l)| (*l).clone()).collect();
        labels.sort();
        labels.dedup();
        let label_index: HashMap<&Cell, usize> = labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
        let examples: Vec<(Vec<usize>, usize)> = data
            .iter()
            .map(|(col, label)| {
                let mut x: Vec<usize> = column_features(col, context)
                    .into_iter()
                    .map(|f| {
                        *features.entry(f.clone()).or_insert_with(|| {
                            feature_names.push(f);
                            feature_names.len() - 1
                        })
                    })
                    .collect();
                x.sort_unstable();
                x.dedup();
                (x, label_index[label])
            })
            .collect();

        let (n_classes, n_feats) = (labels.len(), feature_names.len());
        // weights are stored as scale * v so the L2 shrink is O(1) per step
        let mut v = vec![vec![0.0; n_feats]; n_classes];
        let mut scale = vec![1.0; n_classes];
        let mut bias = vec![0.0; n_classes];
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for epoch in 0..LINEAR_EPOCHS {
            let lr = LINEAR_LR / (epoch + 1) as f64;
            order.shuffle(&mut rng);
            for &e in &order {
                let (x, y) = &examples[e];
                for c in 0..n_classes {
                    let target = if c == *y { 1.0 } else { -1.0 };
                    let score = scale[c] * x.iter().map(|&f| v[c][f]).sum::<f64>() + bias[c];
                    scale[c] *= 1.0 - lr * LINEAR_L2;
                    if target * score < 1.0 {
                        let step = lr * target / scale[c];
                        for &f in x {
                            v[c][f] += step;
                        }
                        bias[c] += lr * target;
                    }
                }
            }
            for c in 0..n_classes {
                if scale[c] < 1e-6 {
                    v[c].iter_mut().for_each(|w| *w *= scale[c]);
                    scale[c] = 1.0;
                }
            }
        }
        let weights = v.into_iter().zip(&scale).map(|(row, s)| row.into_iter().map(|w| w * s).collect()).collect();
        Ok(LinearClassifier { context, features, feature_names, labels, weights, bias })
    }

    pub fn predict(&self, col: &AlignedColumn) -> Cell {
        let x: Vec<usize> = column_features(col, self.context).iter().filter_map(|f| self.features.get(f).copied()).collect();
        let mut best = (f64::NEG_INFINITY, 0);
        for (c, w) in self.weights.iter().enumerate() {
            let score = x.iter().map(|&f| w[f]).sum::<f64>() + self.bias[c];
            if score > best.0 {
                best = (score, c);
            }
        }
        self.labels[best.1].clone()
    }

    pub fn dump(&self) -> String {
        let mut s = String::from("# linear classifier: label\tfeature\tweight (nonzero only)\n");
        for (c, label) in self.labels.iter().enumerate() {
            let _ = writeln!(s, "{}\t<bias>\t{:.6}", label.text(), self.bias[c]);
            for (f, name) in self.feature_names.iter().enumerate() {
                let w = self.weights[c][f];
                if w != 0.0 {
                    let _ = writeln!(s, "{}\t{name}\t{w:.6}", label.text());
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone)]
pub enum SiteClassifier {
    Pattern(PatternClassifier),
    Linear(LinearClassifier),
}

impl SiteClassifier {
    pub fn predict(&self, col: &AlignedColumn) -> Cell {
        match self {
            SiteClassifier::Pattern(p) => p.predict(col),
            SiteClassifier::Linear(l) => l.predict(col),
        }
    }

    /// Text form listing stored patterns or feature weights.
    pub fn dump(&self) -> String {
        match self {
            SiteClassifier::Pattern(p) => p.dump(),
            SiteClassifier::Linear(l) => l.dump(),
        }
    }
}

/// Trains on the proto-labeled columns of `sites`. `seed` drives the linear
/// classifier's example order.
pub fn train_site_classifier(
    sites: &AlignedSiteMatrix,
    kind: ClassifierKind,
    context: ContextConfig,
    seed: u64,
) -> Result<SiteClassifier, BaselineError> {
    Ok(match kind {
        ClassifierKind::Pattern => SiteClassifier::Pattern(PatternClassifier::fit(sites, context)?),
        ClassifierKind::Linear => SiteClassifier::Linear(LinearClassifier::fit(sites, context, seed)?),
    })
}

/// Aligns the daughters of `cs`, predicts a proto symbol or gap per column
/// and drops the gaps.
pub fn reconstruct_with_classifier(clf: &SiteClassifier, cs: &CognateSet, n_languages: usize) -> Word {
    align_cognate_set(cs, n_languages, false)
        .columns
        .iter()
        .filter_map(|col| match clf.predict(col) {
            Cell::Sym(t) => Some(t),
            Cell::Gap | Cell::Missing => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::align::align_cognates;
    use super::*;
    use crate::corpus::{Dataset, LanguageId};

    fn set(id: &str, forms: &[&str], proto: &str) -> CognateSet {
        CognateSet {
            set_id: id.into(),
            proto: Word::from_spaced(proto),
            daughters: forms.iter().enumerate().filter(|(_, f)| !f.is_empty()).map(|(i, f)| (i, Word::from_spaced(f))).collect(),
        }
    }

    fn ds(sets: Vec<CognateSet>) -> Dataset {
        let languages = (0..3).map(|i| LanguageId { name: format!("L{i}"), index: i }).collect();
        Dataset { sets, languages, proto_name: "P".into() }
    }

    fn train_ds() -> Dataset {
        ds(vec![
            set("1", &["t a", "t a", "z a"], "t a"),
            set("2", &["t o", "t o", "z o"], "t o"),
            set("3", &["k a", "g a", "k a"], "k a"),
            set("4", &["p i", "b i", "p i"], "p i"),
        ])
    }

    #[test]
    fn deterministic_correspondence() {
        let train = train_ds();
        let sites = align_cognates(&train);
        let test = set("t", &["t i", "t i", "z i"], "t i");
        for kind in [ClassifierKind::Pattern, ClassifierKind::Linear] {
            let clf = train_site_classifier(&sites, kind, ContextConfig::NONE, 0).unwrap();
            let out = reconstruct_with_classifier(&clf, &test, 3);
            assert_eq!(out.tokens()[0].as_str(), "t", "{kind:?}");
        }
    }

    #[test]
    fn pattern_backs_off_to_nearest() {
        let sites = align_cognates(&ds(vec![set("1", &["t", "t", "z"], "t"), set("2", &["m", "n", "n"], "n")]));
        let clf = train_site_classifier(&sites, ClassifierKind::Pattern, ContextConfig::NONE, 0).unwrap();
        // (t, t, s) is one cell away from (t, t, z) and three from (m, n, n)
        let out = reconstruct_with_classifier(&clf, &set("x", &["t", "t", "s"], "-"), 3);
        assert_eq!(out, Word::from_spaced("t"));
    }

    #[test]
    fn pattern_memorizes_training_sets() {
        let train = train_ds();
        let sites = align_cognates(&train);
        let clf = train_site_classifier(&sites, ClassifierKind::Pattern, ContextConfig::ALL, 0).unwrap();
        for s in &train.sets {
            assert_eq!(reconstruct_with_classifier(&clf, s, 3), s.proto);
        }
    }

    #[test]
    fn linear_fits_separable_sites() {
        let train = train_ds();
        let sites = align_cognates(&train);
        let clf = train_site_classifier(&sites, ClassifierKind::Linear, ContextConfig::ALL, 3).unwrap();
        for col in sites.columns() {
            assert_eq!(&clf.predict(col), col.proto.as_ref().unwrap());
        }
        assert!(clf.dump().lines().count() > 1);
    }

    #[test]
    fn empty_sites_error() {
        let sites = AlignedSiteMatrix { n_languages: 3, sets: vec![] };
        assert!(matches!(train_site_classifier(&sites, ClassifierKind::Linear, ContextConfig::ALL, 0), Err(BaselineError::NoSites)));
    }
}
