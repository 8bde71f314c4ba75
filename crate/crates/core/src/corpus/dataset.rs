use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tokenize::{tokenize_form, TokenizerOptions, Word};
use super::CorpusError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LanguageId {
    pub name: String,
    pub index: usize,
}

/// One protoform with its attested daughter reflexes, keyed by daughter
/// index so iteration always follows the dataset's language order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CognateSet {
    pub set_id: String,
    pub proto: Word,
    pub daughters: BTreeMap<usize, Word>,
}

impl CognateSet {
    pub fn daughter(&self, lang: usize) -> Option<&Word> {
        self.daughters.get(&lang)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParseOptions {
    /// Header name of the proto-language column; the last column when unset.
    pub proto_column: Option<String>,
    pub tokenizer: TokenizerOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sets: Vec<CognateSet>,
    /// Daughter languages in concatenation order; `languages[i].index == i`.
    pub languages: Vec<LanguageId>,
    pub proto_name: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// The proto-language's id; its index lies outside `0..languages.len()`.
    pub fn proto_id(&self) -> LanguageId {
        LanguageId { name: self.proto_name.clone(), index: self.languages.len() }
    }

    pub fn language_names(&self) -> Vec<&str> {
        self.languages.iter().map(|l| l.name.as_str()).collect()
    }

    /// Serializes in the input format, proto column last and missing
    /// reflexes as empty cells.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("set_id");
        for name in self.language_names().into_iter().chain([self.proto_name.as_str()]) {
            out.push('\t');
            out.push_str(name);
        }
        out.push('\n');
        for s in &self.sets {
            out.push_str(&s.set_id);
            for lang in 0..self.languages.len() {
                out.push('\t');
                if let Some(w) = s.daughter(lang) {
                    out.push_str(&w.surface());
                }
            }
            out.push('\t');
            out.push_str(&s.proto.surface());
            out.push('\n');
        }
        out
    }

    /// A dataset with the same languages holding `sets`.
    pub fn with_sets(&self, sets: Vec<CognateSet>) -> Dataset {
        Dataset { sets, languages: self.languages.clone(), proto_name: self.proto_name.clone() }
    }
}

/// Keeps the first of several variants listed in one cell (`tʰa/ta`, `a, b`).
fn first_variant(cell: &str) -> &str {
    cell.split(['/', ',']).next().unwrap_or("").trim()
}

/// Parses a tab-separated cognate table: a header `set_id<TAB>lang...`, then
/// one row per cognate set. Empty cells are missing reflexes; rows without a
/// protoform or without any daughter are dropped.
pub fn parse_dataset(tsv_text: &str, options: &ParseOptions) -> Result<Dataset, CorpusError> {
    let mut lines = tsv_text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| CorpusError::Schema("missing header row".into()))?;
    let columns: Vec<&str> = header.trim_end_matches('\r').split('\t').map(str::trim).collect();
    if columns.len() < 3 {
        return Err(CorpusError::Schema(format!(
            "header needs a set id column, at least one daughter and a proto column; got {} columns",
            columns.len()
        )));
    }
    let mut seen = HashSet::new();
    for name in &columns[1..] {
        if name.is_empty() {
            return Err(CorpusError::Schema("empty language name in header".into()));
        }
        if !seen.insert(*name) {
            return Err(CorpusError::Schema(format!("duplicate language name {name:?}")));
        }
    }
    let proto_col = match &options.proto_column {
        Some(p) => columns[1..]
            .iter()
            .position(|c| c == p)
            .map(|i| i + 1)
            .ok_or_else(|| CorpusError::Schema(format!("proto column {p:?} not in header")))?,
        None => columns.len() - 1,
    };
    let mut languages = Vec::new();
    let mut col_to_lang = vec![None; columns.len()];
    for (col, name) in columns.iter().enumerate().skip(1) {
        if col != proto_col {
            col_to_lang[col] = Some(languages.len());
            languages.push(LanguageId { name: name.to_string(), index: languages.len() });
        }
    }

    let mut sets = Vec::new();
    for (lineno, line) in lines {
        let line_number = lineno + 1;
        let cells: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if cells.len() != columns.len() {
            return Err(CorpusError::Parse {
                line: line_number,
                message: format!("expected {} columns, found {}", columns.len(), cells.len()),
            });
        }
        let tokenize = |col: usize| -> Result<Option<Word>, CorpusError> {
            let cell = first_variant(cells[col]);
            if cell.is_empty() || cell == "-" {
                return Ok(None);
            }
            tokenize_form(cell, &options.tokenizer).map(Some).map_err(|e| CorpusError::Parse {
                line: line_number,
                message: format!("column {:?}: {e}", columns[col]),
            })
        };
        let Some(proto) = tokenize(proto_col)? else { continue };
        let mut daughters = BTreeMap::new();
        for (col, lang) in col_to_lang.iter().enumerate() {
            if let Some(lang) = lang {
                if let Some(w) = tokenize(col)? {
                    daughters.insert(*lang, w);
                }
            }
        }
        if daughters.is_empty() {
            continue;
        }
        sets.push(CognateSet { set_id: cells[0].trim().to_string(), proto, daughters });
    }
    Ok(Dataset { sets, languages, proto_name: columns[proto_col].to_string() })
}

/// Fractions of the train / validation / test partition (70/10/20, test takes
/// the remainder).
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 7 / 10;
    let val = n / 10;
    (train, val, n - train - val)
}

pub const MIN_SPLIT_SIZE: usize = 10;

/// Seeded 70/10/20 partition. The permutation depends only on `seed`.
pub fn split_dataset(ds: &Dataset, seed: u64) -> Result<(Dataset, Dataset, Dataset), CorpusError> {
    let n = ds.len();
    if n < MIN_SPLIT_SIZE {
        return Err(CorpusError::TooSmall { n, min: MIN_SPLIT_SIZE });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train_n, val_n, _) = split_sizes(n);
    let take = |idx: &[usize]| ds.with_sets(idx.iter().map(|&i| ds.sets[i].clone()).collect());
    Ok((take(&order[..train_n]), take(&order[train_n..train_n + val_n]), take(&order[train_n + val_n..])))
}
