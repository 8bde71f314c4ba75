use std::borrow::Cow;
use std::collections::HashMap;

use unicode_normalization::UnicodeNormalization;

use super::distance::cost_table;
use super::MetricsError;
use crate::corpus::phon::{classify, is_stress_mark, SegmentClass};
use crate::corpus::Word;

/// The bundled table: IPA segments by 24 ternary articulatory features,
/// followed by `mod:` rows giving diacritic overrides.
pub const DEFAULT_FEATURES_CSV: &str = include_str!("../../data/features.csv");

const MOD_PREFIX: &str = "mod:";

/// Token → ternary feature vector (+1, -1, 0).
///
/// Tokens not listed verbatim are resolved as the longest listed prefix plus
/// one override row per remaining character; an override value of 0 leaves
/// the base feature alone. Tone tokens map to the all-zero vector.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    names: Vec<String>,
    segments: HashMap<String, Vec<i8>>,
    overrides: HashMap<char, Vec<i8>>,
}

fn parse_value(s: &str) -> Option<i8> {
    match s.trim() {
        "+" => Some(1),
        "-" => Some(-1),
        "0" => Some(0),
        _ => None,
    }
}

impl FeatureTable {
    pub fn parse_csv(text: &str) -> Result<Self, MetricsError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((_, header)) = lines.next() else {
            return Err(MetricsError::FeatureTable { line: 1, message: "missing header".into() });
        };
        let mut cols = header.split(',');
        if cols.next().map(str::trim) != Some("token") {
            return Err(MetricsError::FeatureTable { line: 1, message: "first column must be `token`".into() });
        }
        let names: Vec<String> = cols.map(|c| c.trim().to_string()).collect();
        if names.is_empty() {
            return Err(MetricsError::FeatureTable { line: 1, message: "no feature columns".into() });
        }
        let mut table = FeatureTable { names, segments: HashMap::new(), overrides: HashMap::new() };
        for (idx, line) in lines {
            let err = |message: String| MetricsError::FeatureTable { line: idx + 1, message };
            let mut cells = line.split(',');
            let key = cells.next().unwrap_or_default().trim();
            let values = cells
                .map(|c| parse_value(c).ok_or_else(|| err(format!("bad feature value {c:?}"))))
                .collect::<Result<Vec<i8>, _>>()?;
            if values.len() != table.names.len() {
                return Err(err(format!("{} values, expected {}", values.len(), table.names.len())));
            }
            if let Some(mark) = key.strip_prefix(MOD_PREFIX) {
                let mut chars = mark.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => table.overrides.insert(c, values),
                    _ => return Err(err(format!("override key {mark:?} must be one character"))),
                };
            } else {
                if key.is_empty() {
                    return Err(err("empty token".into()));
                }
                table.segments.insert(key.nfd().collect(), values);
            }
        }
        Ok(table)
    }

    /// Number of features per vector.
    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.names
    }

    pub fn lookup(&self, token: &str) -> Result<Cow<'_, [i8]>, MetricsError> {
        let key: String = token.nfd().collect();
        if let Some(v) = self.segments.get(&key) {
            return Ok(Cow::Borrowed(v));
        }
        let suprasegmental = classify(&key) == SegmentClass::Tone || key.chars().all(is_stress_mark);
        if !key.is_empty() && suprasegmental {
            return Ok(Cow::Owned(vec![0; self.width()]));
        }
        let chars: Vec<char> = key.chars().collect();
        for split in (1..chars.len()).rev() {
            let base: String = chars[..split].iter().collect();
            let Some(v) = self.segments.get(&base) else { continue };
            let mut out = v.clone();
            for c in &chars[split..] {
                let Some(o) = self.overrides.get(c) else {
                    return Err(MetricsError::UnknownToken(token.to_string()));
                };
                for (x, &m) in out.iter_mut().zip(o) {
                    if m != 0 {
                        *x = m;
                    }
                }
            }
            return Ok(Cow::Owned(out));
        }
        Err(MetricsError::UnknownToken(token.to_string()))
    }
}

impl Default for FeatureTable {
    fn default() -> Self {
        FeatureTable::parse_csv(DEFAULT_FEATURES_CSV).expect("bundled feature table is well formed")
    }
}

/// Feature-weighted edit distance from `pred` to `gold`, divided by the gold
/// length. Substitutions cost the fraction of differing features; insertions
/// and deletions cost 1.
pub fn feature_error_rate(pred: &Word, gold: &Word, ft: &FeatureTable) -> Result<f64, MetricsError> {
    let vecs = |w: &Word| w.iter().map(|t| ft.lookup(t.as_str())).collect::<Result<Vec<_>, _>>();
    let (pv, gv) = (vecs(pred)?, vecs(gold)?);
    let width = ft.width() as f64;
    let d = cost_table(pred.tokens(), gold.tokens(), |i, j| {
        pv[i].iter().zip(gv[j].iter()).filter(|(a, b)| a != b).count() as f64 / width
    });
    Ok(d[pred.len()][gold.len()] / gold.len().max(1) as f64)
}
