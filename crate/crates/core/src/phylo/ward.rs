use super::distance::DistanceMatrix;
use super::tree::{Node, Tree};
use super::PhyloError;

struct Cluster {
    node: usize,
    size: usize,
    /// Smallest leaf label inside, used for tie-breaks and child order.
    key: String,
}

/// Agglomerative Ward clustering with Lance–Williams updates. Equal
/// distances merge the pair whose (smaller, larger) cluster keys sort first.
pub fn ward_cluster(m: &DistanceMatrix) -> Result<Tree, PhyloError> {
    let n = m.len();
    if n < 2 {
        return Err(PhyloError::TooFewLeaves { needed: 2, got: n });
    }
    let mut nodes: Vec<Node> = m.labels().iter().map(|l| Node::leaf(l.clone(), Some(0.0))).collect();
    let mut clusters: Vec<Option<Cluster>> =
        m.labels().iter().enumerate().map(|(i, l)| Some(Cluster { node: i, size: 1, key: l.clone() })).collect();
    let mut d: Vec<Vec<f64>> = m.rows().to_vec();

    for _ in 1..n {
        let mut best: Option<(f64, (&str, &str), usize, usize)> = None;
        for i in 0..n {
            let Some(ci) = &clusters[i] else { continue };
            for j in i + 1..n {
                let Some(cj) = &clusters[j] else { continue };
                let pair = if ci.key <= cj.key { (ci.key.as_str(), cj.key.as_str()) } else { (cj.key.as_str(), ci.key.as_str()) };
                let dij = d[i][j];
                let better = match &best {
                    None => true,
                    Some((bd, bp, _, _)) => dij < *bd || (dij == *bd && pair < *bp),
                };
                if better {
                    best = Some((dij, pair, i, j));
                }
            }
        }
        let (dij, _, i, j) = best.unwrap();
        let ci = clusters[i].take().unwrap();
        let cj = clusters[j].take().unwrap();
        let (ni, nj) = (ci.size as f64, cj.size as f64);
        for k in 0..n {
            let Some(ck) = &clusters[k] else { continue };
            let nk = ck.size as f64;
            let v = ((ni + nk) * d[i][k].powi(2) + (nj + nk) * d[j][k].powi(2) - nk * dij.powi(2)) / (ni + nj + nk);
            let v = v.max(0.0).sqrt();
            d[i][k] = v;
            d[k][i] = v;
        }
        let (first, second) = if ci.key <= cj.key { (ci, cj) } else { (cj, ci) };
        nodes.push(Node::internal(vec![first.node, second.node], Some(dij)));
        clusters[i] = Some(Cluster { node: nodes.len() - 1, size: first.size + second.size, key: first.key });
    }
    let root = nodes.len() - 1;
    Tree::new(nodes, root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phylo::to_newick;

    #[test]
    fn two_points() {
        let m = DistanceMatrix::new(vec!["x".into(), "y".into()], vec![vec![0.0, 0.7], vec![0.7, 0.0]]).unwrap();
        let t = ward_cluster(&m).unwrap();
        assert_eq!(t.merge_heights(), [0.7]);
        assert_eq!(to_newick(&t), "(x:0.7,y:0.7);");
    }

    #[test]
    fn ties_use_label_order() {
        let l = |s: &str| s.to_string();
        let m = DistanceMatrix::new(
            vec![l("d"), l("c"), l("b"), l("a")],
            vec![vec![0.0, 1.0, 5.0, 5.0], vec![1.0, 0.0, 5.0, 5.0], vec![5.0, 5.0, 0.0, 1.0], vec![5.0, 5.0, 1.0, 0.0]],
        )
        .unwrap();
        let t = ward_cluster(&m).unwrap();
        let first = &t.nodes()[4];
        // {a, b} merges before {c, d}
        assert_eq!(t.leaves_under(4).iter().map(|&i| t.nodes()[i].label.clone().unwrap()).collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(first.height, Some(1.0));
    }
}
