use std::fmt::Write as _;

use super::PhyloError;

const SYMMETRY_TOL: f64 = 1e-12;

/// Labeled symmetric distance matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    labels: Vec<String>,
    d: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn new(labels: Vec<String>, d: Vec<Vec<f64>>) -> Result<Self, PhyloError> {
        let n = labels.len();
        if d.len() != n || d.iter().any(|row| row.len() != n) {
            return Err(PhyloError::InvalidMatrix(format!("expected {n}x{n} entries")));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(PhyloError::DuplicateLabel(l.clone()));
            }
        }
        for i in 0..n {
            if d[i][i] != 0.0 {
                return Err(PhyloError::InvalidMatrix(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let x = d[i][j];
                if !x.is_finite() || x < 0.0 {
                    return Err(PhyloError::InvalidMatrix(format!("entry ({i}, {j}) = {x}")));
                }
                if (x - d[j][i]).abs() > SYMMETRY_TOL {
                    return Err(PhyloError::NotSymmetric { i, j });
                }
            }
        }
        Ok(Self { labels, d })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.d
    }

    /// Labeled CSV: a header of labels after an empty corner cell, then one
    /// row per label.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for l in &self.labels {
            s.push(',');
            s.push_str(l);
        }
        s.push('\n');
        for (l, row) in self.labels.iter().zip(&self.d) {
            s.push_str(l);
            for x in row {
                let _ = write!(s, ",{x}");
            }
            s.push('\n');
        }
        s
    }
}

/// `d[i][j] = 1 - cos(e_i, e_j)`, in the order given.
pub fn cosine_distance_matrix(embs: &[(String, Vec<f64>)]) -> Result<DistanceMatrix, PhyloError> {
    let dim = embs.first().map_or(0, |(_, v)| v.len());
    let mut norms = Vec::with_capacity(embs.len());
    for (label, v) in embs {
        if v.len() != dim {
            return Err(PhyloError::EmbeddingLength { label: label.clone(), expected: dim, got: v.len() });
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(PhyloError::ZeroVector(label.clone()));
        }
        norms.push(n);
    }
    let n = embs.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let dot: f64 = embs[i].1.iter().zip(&embs[j].1).map(|(a, b)| a * b).sum();
            // clamp rounding so identical vectors give exactly 0
            let cos = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            let x = (1.0 - cos).max(0.0);
            d[i][j] = x;
            d[j][i] = x;
        }
    }
    DistanceMatrix::new(embs.iter().map(|(l, _)| l.clone()).collect(), d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(l: &str, v: &[f64]) -> (String, Vec<f64>) {
        (l.to_string(), v.to_vec())
    }

    #[test]
    fn cosine_reference_values() {
        let m = cosine_distance_matrix(&[e("a", &[1.0, 0.0]), e("b", &[2.0, 0.0]), e("c", &[0.0, 3.0]), e("d", &[-1.0, 0.0])]).unwrap();
        assert_eq!(m.get(0, 1), 0.0);
        assert!((m.get(0, 2) - 1.0).abs() < 1e-15);
        assert!((m.get(0, 3) - 2.0).abs() < 1e-15);
        assert_eq!(m.get(2, 0), m.get(0, 2));
    }

    #[test]
    fn zero_vector_rejected() {
        let err = cosine_distance_matrix(&[e("a", &[1.0, 0.0]), e("z", &[0.0, 0.0])]).unwrap_err();
        assert_eq!(err, PhyloError::ZeroVector("z".into()));
    }

    #[test]
    fn asymmetric_rejected() {
        let err = DistanceMatrix::new(vec!["a".into(), "b".into()], vec![vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap_err();
        assert_eq!(err, PhyloError::NotSymmetric { i: 0, j: 1 });
    }

    #[test]
    fn csv_layout() {
        let m = DistanceMatrix::new(vec!["a".into(), "b".into()], vec![vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        assert_eq!(m.to_csv(), ",a,b\na,0,0.5\nb,0.5,0\n");
    }
}
