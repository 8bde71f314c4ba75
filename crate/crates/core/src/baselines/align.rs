use std::collections::BTreeMap;

use crate::corpus::phon::{classify, SegmentClass};
use crate::corpus::{CognateSet, Dataset, Token, Word};

const GAP_COST: f64 = 1.0;
const CLASS_MISMATCH_COST: f64 = 0.5;

/// One daughter's entry in an aligned column, or a proto label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cell {
    Sym(Token),
    Gap,
    /// The daughter has no reflex in this set.
    Missing,
}

impl Cell {
    pub fn text(&self) -> &str {
        match self {
            Cell::Sym(t) => t.as_str(),
            Cell::Gap => "-",
            Cell::Missing => "?",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PosBucket {
    First,
    Early,
    Mid,
    Late,
    Last,
}

impl PosBucket {
    fn of(col: usize, n: usize) -> Self {
        if col == 0 {
            return PosBucket::First;
        }
        if col + 1 == n {
            return PosBucket::Last;
        }
        let r = col as f64 / (n - 1) as f64;
        if r < 1.0 / 3.0 {
            PosBucket::Early
        } else if r < 2.0 / 3.0 {
            PosBucket::Mid
        } else {
            PosBucket::Late
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PosBucket::First => "first",
            PosBucket::Early => "early",
            PosBucket::Mid => "mid",
            PosBucket::Late => "late",
            PosBucket::Last => "last",
        }
    }
}

/// Position, prosodic-structure and word-edge context of one column.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ContextFeatures {
    pub pos: PosBucket,
    /// Class of the column's most common daughter symbol, if any.
    pub structure: Option<SegmentClass>,
    /// Most daughters with a symbol here have their first symbol here.
    pub initial: bool,
    pub final_: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedColumn {
    /// One cell per daughter language of the dataset.
    pub cells: Vec<Cell>,
    /// The aligned proto symbol or gap; `None` when aligned without proto.
    pub proto: Option<Cell>,
    pub context: ContextFeatures,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedSet {
    pub set_id: String,
    pub columns: Vec<AlignedColumn>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedSiteMatrix {
    pub n_languages: usize,
    pub sets: Vec<AlignedSet>,
}

impl AlignedSiteMatrix {
    pub fn columns(&self) -> impl Iterator<Item = &AlignedColumn> {
        self.sets.iter().flat_map(|s| s.columns.iter())
    }
}

fn substitution_cost(a: &Token, b: &Token) -> f64 {
    if a == b {
        0.0
    } else if classify(a.as_str()) == classify(b.as_str()) {
        CLASS_MISMATCH_COST
    } else {
        1.0
    }
}

/// Most common non-gap symbol of a column; ties go to the smaller token.
fn consensus_symbol(column: &[Option<Token>]) -> Option<&Token> {
    let mut counts: BTreeMap<&Token, usize> = BTreeMap::new();
    for t in column.iter().flatten() {
        *counts.entry(t).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    counts.into_iter().find(|(_, c)| *c == best).map(|(t, _)| t)
}

fn pair_cost(a: Option<&Token>, b: &Token) -> f64 {
    a.map_or(GAP_COST, |a| substitution_cost(a, b))
}

/// Adds `row` to a column-major profile by global alignment. Placing a
/// symbol in a column costs its summed pairwise cost against the column's
/// cells (gaps cost 1); a gap costs 1 per symbol in the column; a new column
/// costs 1 per existing row. Backtracking prefers the diagonal, then a gap in
/// the new row, then a new column.
fn add_row(profile: &mut Vec<Vec<Option<Token>>>, n_rows: usize, row: &[Token]) {
    let (n, m) = (profile.len(), row.len());
    let gap_in_row: Vec<f64> = profile.iter().map(|c| c.iter().flatten().count() as f64 * GAP_COST).collect();
    let new_column = n_rows as f64 * GAP_COST;
    let costs: Vec<Vec<f64>> =
        profile.iter().map(|col| row.iter().map(|t| col.iter().map(|c| pair_cost(c.as_ref(), t)).sum()).collect()).collect();
    let sub = |i: usize, j: usize| costs[i][j];
    let mut d = vec![vec![0.0; m + 1]; n + 1];
    for i in 1..=n {
        d[i][0] = d[i - 1][0] + gap_in_row[i - 1];
    }
    for j in 1..=m {
        d[0][j] = j as f64 * new_column;
    }
    for i in 1..=n {
        for j in 1..=m {
            d[i][j] = (d[i - 1][j - 1] + sub(i - 1, j - 1)).min(d[i - 1][j] + gap_in_row[i - 1]).min(d[i][j - 1] + new_column);
        }
    }
    let (mut i, mut j) = (n, m);
    let mut out: Vec<Vec<Option<Token>>> = Vec::with_capacity(n.max(m));
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + sub(i - 1, j - 1) {
            let mut col = std::mem::take(&mut profile[i - 1]);
            col.push(Some(row[j - 1].clone()));
            out.push(col);
            i -= 1;
            j -= 1;
        } else if i > 0 && d[i][j] == d[i - 1][j] + gap_in_row[i - 1] {
            let mut col = std::mem::take(&mut profile[i - 1]);
            col.push(None);
            out.push(col);
            i -= 1;
        } else {
            let mut col = vec![None; n_rows];
            col.push(Some(row[j - 1].clone()));
            out.push(col);
            j -= 1;
        }
    }
    out.reverse();
    *profile = out;
}

/// Progressive alignment of rows given longest first (ties keep input
/// order). Returns the aligned rows in input order.
fn progressive(rows: &[&Word]) -> Vec<Vec<Option<Token>>> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[b].len().cmp(&rows[a].len()).then(a.cmp(&b)));
    let mut profile: Vec<Vec<Option<Token>>> = Vec::new();
    for (k, &r) in order.iter().enumerate() {
        add_row(&mut profile, k, rows[r].tokens());
    }
    let n_cols = profile.len();
    let mut aligned = vec![Vec::with_capacity(n_cols); rows.len()];
    for col in profile {
        for (k, cell) in col.into_iter().enumerate() {
            aligned[order[k]].push(cell);
        }
    }
    aligned
}

fn context_of(rows: &[Vec<Option<Token>>], col: usize, n_cols: usize) -> ContextFeatures {
    let column: Vec<Option<Token>> = rows.iter().map(|r| r[col].clone()).collect();
    let structure = consensus_symbol(&column).map(|t| classify(t.as_str()));
    let present: Vec<&Vec<Option<Token>>> = rows.iter().filter(|r| r[col].is_some()).collect();
    let share = |f: &dyn Fn(&Vec<Option<Token>>) -> bool| 2 * present.iter().filter(|r| f(r)).count() > present.len();
    let initial = share(&|r| r[..col].iter().all(Option::is_none));
    let final_ = share(&|r| r[col + 1..].iter().all(Option::is_none));
    ContextFeatures { pos: PosBucket::of(col, n_cols), structure, initial, final_ }
}

/// Aligns the daughters of one set, and the proto last when `with_proto`.
pub fn align_cognate_set(cs: &CognateSet, n_languages: usize, with_proto: bool) -> AlignedSet {
    let langs: Vec<usize> = cs.daughters.keys().copied().collect();
    let rows: Vec<&Word> = cs.daughters.values().collect();
    let mut daughter_rows = progressive(&rows);
    let mut proto_row = None;
    if with_proto {
        // the proto joins the finished daughter profile
        let n_cols = daughter_rows.first().map_or(0, Vec::len);
        let mut profile: Vec<Vec<Option<Token>>> = (0..n_cols).map(|c| daughter_rows.iter().map(|r| r[c].clone()).collect()).collect();
        add_row(&mut profile, daughter_rows.len(), cs.proto.tokens());
        let k = daughter_rows.len();
        daughter_rows = (0..k).map(|r| profile.iter().map(|c| c[r].clone()).collect()).collect();
        proto_row = Some(profile.iter().map(|c| c[k].clone()).collect::<Vec<_>>());
    }
    let n_cols = daughter_rows.first().map_or(0, Vec::len);
    let columns = (0..n_cols)
        .map(|c| {
            let mut cells = vec![Cell::Missing; n_languages];
            for (r, &lang) in langs.iter().enumerate() {
                cells[lang] = daughter_rows[r][c].clone().map_or(Cell::Gap, Cell::Sym);
            }
            let proto = proto_row.as_ref().map(|p| p[c].clone().map_or(Cell::Gap, Cell::Sym));
            AlignedColumn { cells, proto, context: context_of(&daughter_rows, c, n_cols) }
        })
        .collect();
    AlignedSet { set_id: cs.set_id.clone(), columns }
}

/// Aligns every set of `ds` with its proto row.
pub fn align_cognates(ds: &Dataset) -> AlignedSiteMatrix {
    let n = ds.languages.len();
    AlignedSiteMatrix { n_languages: n, sets: ds.sets.iter().map(|s| align_cognate_set(s, n, true)).collect() }
}
