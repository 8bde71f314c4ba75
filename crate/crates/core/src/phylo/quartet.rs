use super::tree::Tree;
use super::PhyloError;

/// Unrooted topology induced on four leaves a, b, c, d.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuartetTopology {
    /// ab|cd
    AbCd,
    /// ac|bd
    AcBd,
    /// ad|bc
    AdBc,
    Star,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QuartetCounts {
    pub total: usize,
    /// Resolved in gold.
    pub gold_resolved: usize,
    /// Resolved in gold and differing (or unresolved) in test.
    pub differing: usize,
}

impl QuartetCounts {
    pub fn compare(gold: &Tree, test: &Tree) -> Result<Self, PhyloError> {
        counts(gold, test)
    }

    pub fn distance(&self) -> Result<f64, PhyloError> {
        if self.gold_resolved == 0 {
            return Err(PhyloError::NoResolvedQuartets);
        }
        Ok(self.differing as f64 / self.gold_resolved as f64)
    }
}

/// Edge-count distances between every pair of `leaves` (node indices).
fn leaf_distances(t: &Tree, leaves: &[usize]) -> Vec<Vec<usize>> {
    let depth: Vec<usize> = leaves.iter().map(|&l| t.depth(l)).collect();
    let n = leaves.len();
    let mut d = vec![vec![0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let x = depth[i] + depth[j] - 2 * t.depth(t.lca(leaves[i], leaves[j]));
            d[i][j] = x;
            d[j][i] = x;
        }
    }
    d
}

/// The pairing with the strictly smallest path-length sum; ties mean the
/// four paths meet at one node.
fn topology_from(d: &[Vec<usize>], a: usize, b: usize, c: usize, e: usize) -> QuartetTopology {
    let s = [d[a][b] + d[c][e], d[a][c] + d[b][e], d[a][e] + d[b][c]];
    let min = *s.iter().min().unwrap();
    if s.iter().filter(|&&x| x == min).count() > 1 {
        return QuartetTopology::Star;
    }
    match s.iter().position(|&x| x == min).unwrap() {
        0 => QuartetTopology::AbCd,
        1 => QuartetTopology::AcBd,
        _ => QuartetTopology::AdBc,
    }
}

/// Topology of the quartet on the named leaves.
pub fn quartet_topology(t: &Tree, labels: [&str; 4]) -> Result<QuartetTopology, PhyloError> {
    let mut idx = Vec::with_capacity(4);
    for l in labels {
        idx.push(t.find_leaf(l).ok_or(PhyloError::LeafSetMismatch)?);
    }
    let d = leaf_distances(t, &idx);
    Ok(topology_from(&d, 0, 1, 2, 3))
}

fn counts(gold: &Tree, test: &Tree) -> Result<QuartetCounts, PhyloError> {
    if gold.leaf_set() != test.leaf_set() {
        return Err(PhyloError::LeafSetMismatch);
    }
    let gold_leaves = gold.leaves();
    let n = gold_leaves.len();
    if n < 4 {
        return Err(PhyloError::TooFewLeaves { needed: 4, got: n });
    }
    let test_leaves: Vec<usize> = gold_leaves.iter().map(|&l| test.find_leaf(gold.label(l)).unwrap()).collect();
    let dg = leaf_distances(gold, &gold_leaves);
    let dt = leaf_distances(test, &test_leaves);
    let mut c = QuartetCounts::default();
    for a in 0..n {
        for b in a + 1..n {
            for x in b + 1..n {
                for y in x + 1..n {
                    c.total += 1;
                    let g = topology_from(&dg, a, b, x, y);
                    if g == QuartetTopology::Star {
                        continue;
                    }
                    c.gold_resolved += 1;
                    if topology_from(&dt, a, b, x, y) != g {
                        c.differing += 1;
                    }
                }
            }
        }
    }
    Ok(c)
}

/// Generalized quartet distance: the share of gold-resolved quartets that
/// the test tree resolves differently or leaves unresolved.
pub fn gqd(gold: &Tree, test: &Tree) -> Result<f64, PhyloError> {
    counts(gold, test)?.distance()
}
