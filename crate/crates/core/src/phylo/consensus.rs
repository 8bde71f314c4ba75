use std::collections::{BTreeMap, BTreeSet};

use super::tree::{Node, Tree};
use super::PhyloError;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Majority-rule consensus over rooted clusters: a cluster survives when it
/// occurs in more than `threshold` of the trees, or in all of them when
/// `threshold` is 1 (strict consensus). Heights are dropped.
///
/// Thresholds below one half could keep incompatible clusters and are
/// rejected.
pub fn consensus(trees: &[Tree], threshold: f64) -> Result<Tree, PhyloError> {
    if !(0.5..=1.0).contains(&threshold) {
        return Err(PhyloError::Threshold(threshold));
    }
    let first = trees.first().ok_or(PhyloError::NoTrees)?;
    let leaves = first.leaf_set();
    if trees.iter().any(|t| t.leaf_set() != leaves || t.n_leaves() != leaves.len()) {
        return Err(PhyloError::LeafSetMismatch);
    }
    let mut counts: BTreeMap<BTreeSet<String>, usize> = BTreeMap::new();
    for t in trees {
        for c in t.clusters() {
            *counts.entry(c).or_default() += 1;
        }
    }
    let total = trees.len() as f64;
    let keep = |k: usize| if threshold == 1.0 { k == trees.len() } else { k as f64 / total > threshold };
    let mut kept: Vec<BTreeSet<String>> = counts.into_iter().filter(|(_, k)| keep(*k)).map(|(c, _)| c).collect();
    // larger clusters first so each one's parent is already placed
    kept.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    build(&leaves, &kept)
}

/// The tree whose clusters are exactly `clusters` (pairwise compatible,
/// sorted by decreasing size).
fn build(leaves: &BTreeSet<String>, clusters: &[BTreeSet<String>]) -> Result<Tree, PhyloError> {
    // slot 0 is the root; slot k + 1 holds clusters[k]
    let mut groups: Vec<&BTreeSet<String>> = vec![leaves];
    groups.extend(clusters.iter());
    let smallest_container = |members: &dyn Fn(&BTreeSet<String>) -> bool, upto: usize| -> usize {
        (0..upto).rev().find(|&g| members(groups[g])).unwrap_or(0)
    };
    let mut parent = vec![0usize; groups.len()];
    for k in 1..groups.len() {
        let c = groups[k];
        parent[k] = smallest_container(&|g: &BTreeSet<String>| c.is_subset(g), k);
    }
    let mut leaf_parent = BTreeMap::new();
    for l in leaves {
        leaf_parent.insert(l.clone(), smallest_container(&|g: &BTreeSet<String>| g.contains(l), groups.len()));
    }

    // children keyed by their smallest label for a stable layout
    let mut kids: Vec<Vec<(String, Child)>> = vec![Vec::new(); groups.len()];
    for k in 1..groups.len() {
        kids[parent[k]].push((groups[k].iter().next().unwrap().clone(), Child::Group(k)));
    }
    for (l, g) in &leaf_parent {
        kids[*g].push((l.clone(), Child::Leaf(l.clone())));
    }
    let mut nodes = Vec::new();
    let root = emit(0, &mut kids, &mut nodes);
    Tree::new(nodes, root)
}

#[derive(Clone)]
enum Child {
    Group(usize),
    Leaf(String),
}

fn emit(g: usize, kids: &mut Vec<Vec<(String, Child)>>, nodes: &mut Vec<Node>) -> usize {
    let mut mine = std::mem::take(&mut kids[g]);
    mine.sort_by(|a, b| a.0.cmp(&b.0));
    let children = mine
        .into_iter()
        .map(|(_, c)| match c {
            Child::Group(k) => emit(k, kids, nodes),
            Child::Leaf(l) => {
                nodes.push(Node::leaf(l, None));
                nodes.len() - 1
            }
        })
        .collect();
    nodes.push(Node::internal(children, None));
    nodes.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phylo::{parse_newick, to_newick};

    fn p(s: &str) -> Tree {
        parse_newick(s).unwrap()
    }

    #[test]
    fn copies_give_the_same_topology() {
        let t = p("((A:1,B:1):2,(C:2,D:2):1);");
        let c = consensus(&vec![t.clone(); 10], DEFAULT_THRESHOLD).unwrap();
        assert!(c.same_topology(&t));
        assert_eq!(to_newick(&c), "((A,B),(C,D));");
    }

    #[test]
    fn two_of_three_kept() {
        let c = consensus(&[p("((A,B),C,D);"), p("((A,B),(C,D));"), p("((A,C),B,D);")], 0.5).unwrap();
        assert_eq!(to_newick(&c), "((A,B),C,D);");
    }

    #[test]
    fn no_majority_gives_star() {
        let c = consensus(&[p("((A,B),C,D);"), p("((A,C),B,D);"), p("((A,D),B,C);")], 0.5).unwrap();
        assert_eq!(to_newick(&c), "(A,B,C,D);");
    }

    #[test]
    fn exactly_half_is_not_a_majority() {
        let c = consensus(&[p("((A,B),C,D);"), p("((A,C),B,D);")], 0.5).unwrap();
        assert_eq!(to_newick(&c), "(A,B,C,D);");
    }

    #[test]
    fn mismatched_leaves_rejected() {
        assert_eq!(consensus(&[p("(A,B);"), p("(A,C);")], 0.5).unwrap_err(), PhyloError::LeafSetMismatch);
        assert_eq!(consensus(&[p("(A,B);")], 0.3).unwrap_err(), PhyloError::Threshold(0.3));
    }
}
