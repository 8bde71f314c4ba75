//! Results tables: mean ± sd per system over seeds, as aligned text and CSV.

use std::fmt::Write as _;

use protorec::metrics::{ErrorBreakdown, MetricsReport};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; only with more than one run.
    pub sd: Option<f64>,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.len() > 1).then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Stat { mean, sd }
    }
}

#[derive(Debug, Clone)]
pub struct SystemResult {
    pub name: String,
    pub runs: Vec<MetricsReport>,
}

impl SystemResult {
    fn column(&self, f: impl Fn(&MetricsReport) -> f64) -> Stat {
        Stat::of(&self.runs.iter().map(f).collect::<Vec<_>>())
    }

    pub fn ped(&self) -> Stat {
        self.column(|r| r.ped)
    }

    pub fn nped(&self) -> Stat {
        self.column(|r| r.nped)
    }

    pub fn accuracy(&self) -> Stat {
        self.column(|r| r.accuracy)
    }

    pub fn bcfs(&self) -> Stat {
        self.column(|r| r.bcfs)
    }

    /// None when any run lacks FER.
    pub fn fer(&self) -> Option<Stat> {
        let v: Option<Vec<f64>> = self.runs.iter().map(|r| r.fer).collect();
        v.map(|v| Stat::of(&v))
    }
}

#[derive(Debug, Clone, Default)]
pub struct ResultsTable {
    pub rows: Vec<SystemResult>,
}

fn cell(s: Stat, pct: bool) -> String {
    let unit = if pct { "%" } else { "" };
    let digits = if pct { 2 } else { 4 };
    match s.sd {
        Some(sd) => format!("{:.*}{unit} ± {:.*}{unit}", digits, s.mean, digits, sd),
        None => format!("{:.*}{unit}", digits, s.mean),
    }
}

fn csv_pair(out: &mut String, s: Option<Stat>) {
    match s {
        Some(s) => {
            let _ = write!(out, ",{}", s.mean);
            match s.sd {
                Some(sd) => {
                    let _ = write!(out, ",{sd}");
                }
                None => out.push(','),
            }
        }
        None => out.push_str(",,"),
    }
}

impl ResultsTable {
    pub fn to_text(&self) -> String {
        let header = ["System", "Runs", "PED", "NPED", "Acc %", "FER", "BCFS"];
        let mut lines: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            lines.push(vec![
                r.name.clone(),
                r.runs.len().to_string(),
                cell(r.ped(), false),
                cell(r.nped(), false),
                cell(r.accuracy(), true),
                r.fer().map_or_else(|| "\u{2212}".to_string(), |s| cell(s, false)),
                cell(r.bcfs(), false),
            ]);
        }
        let widths: Vec<usize> = (0..header.len()).map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap()).collect();
        let mut out = String::new();
        for l in &lines {
            let padded: Vec<String> = l.iter().zip(&widths).map(|(s, w)| format!("{s}{}", " ".repeat(w - s.chars().count()))).collect();
            out.push_str(padded.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("system,runs,ped_mean,ped_sd,nped_mean,nped_sd,acc_mean,acc_sd,fer_mean,fer_sd,bcfs_mean,bcfs_sd\n");
        for r in &self.rows {
            let name = if r.name.contains(',') { format!("\"{}\"", r.name) } else { r.name.clone() };
            let _ = write!(out, "{name},{}", r.runs.len());
            csv_pair(&mut out, Some(r.ped()));
            csv_pair(&mut out, Some(r.nped()));
            csv_pair(&mut out, Some(r.accuracy()));
            csv_pair(&mut out, r.fer());
            csv_pair(&mut out, Some(r.bcfs()));
            out.push('\n');
        }
        out
    }
}

/// Substitution, deletion and insertion shares plus the most frequent
/// substitution pairs.
pub fn breakdown_text(b: &ErrorBreakdown, top: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "substitutions {}  deletions {}  insertions {}", b.substitutions, b.deletions, b.insertions);
    if let Some((s, d, i)) = b.shares() {
        let _ = writeln!(out, "shares: substitution {:.1}%  deletion {:.1}%  insertion {:.1}%", 100.0 * s, 100.0 * d, 100.0 * i);
    }
    for p in b.substitution_pairs.iter().take(top) {
        let _ = writeln!(out, "  {} -> {}  {}", p.gold.as_str(), p.pred.as_str(), p.count);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use protorec::corpus::Word;
    use protorec::metrics::evaluate;

    fn run(preds: &[&str], golds: &[&str]) -> MetricsReport {
        let p: Vec<Word> = preds.iter().map(|s| Word::from_spaced(s)).collect();
        let g: Vec<Word> = golds.iter().map(|s| Word::from_spaced(s)).collect();
        evaluate(&p, &g, None).unwrap()
    }

    #[test]
    fn sample_sd_and_missing_fer() {
        let a = run(&["a b"], &["a b"]);
        let b = run(&["a c"], &["a b"]);
        let t = ResultsTable { rows: vec![SystemResult { name: "X".into(), runs: vec![a.clone(), b] }, SystemResult { name: "Y".into(), runs: vec![a] }] };
        let s = t.rows[0].ped();
        assert_eq!(s.mean, 0.5);
        assert!((s.sd.unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(t.rows[1].ped().sd, None);
        let text = t.to_text();
        assert!(text.contains("0.5000 ± 0.7071"));
        assert!(text.contains('\u{2212}'));
        let csv = t.to_csv();
        assert_eq!(csv.lines().nth(2).unwrap(), "Y,1,0,,0,,100,,,,1,");
    }
}
