use std::collections::{BTreeSet, HashSet};

use super::PhyloError;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub label: Option<String>,
    pub children: Vec<usize>,
    /// Merge height for dendrograms; leaves sit at 0.
    pub height: Option<f64>,
}

impl Node {
    pub fn leaf(label: impl Into<String>, height: Option<f64>) -> Self {
        Node { label: Some(label.into()), children: vec![], height }
    }

    pub fn internal(children: Vec<usize>, height: Option<f64>) -> Self {
        Node { label: None, children, height }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Rooted tree stored as a node arena.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    root: usize,
    parent: Vec<Option<usize>>,
}

impl Tree {
    /// Checks that `nodes` form one tree under `root` with uniquely labeled
    /// leaves.
    pub fn new(nodes: Vec<Node>, root: usize) -> Result<Self, PhyloError> {
        if root >= nodes.len() {
            return Err(PhyloError::InvalidTree(format!("root {root} out of range")));
        }
        let mut parent = vec![None; nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            for &c in &n.children {
                if c >= nodes.len() || c == root || parent[c].is_some() {
                    return Err(PhyloError::InvalidTree(format!("node {c} has a bad parent link")));
                }
                parent[c] = Some(i);
            }
        }
        let mut labels = HashSet::new();
        let mut seen = 0;
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            seen += 1;
            let n = &nodes[i];
            match &n.label {
                Some(l) => {
                    if !labels.insert(l.as_str()) {
                        return Err(PhyloError::DuplicateLabel(l.clone()));
                    }
                }
                None if n.is_leaf() => return Err(PhyloError::InvalidTree(format!("leaf {i} has no label"))),
                None => {}
            }
            stack.extend(n.children.iter().copied());
        }
        if seen != nodes.len() {
            return Err(PhyloError::InvalidTree("unreachable nodes".into()));
        }
        Ok(Tree { nodes, root, parent })
    }

    /// A root with every label as a direct child.
    pub fn star(labels: &[String]) -> Result<Self, PhyloError> {
        let mut nodes: Vec<Node> = labels.iter().map(|l| Node::leaf(l.clone(), None)).collect();
        nodes.push(Node::internal((0..labels.len()).collect(), None));
        let root = nodes.len() - 1;
        Tree::new(nodes, root)
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    /// Leaf node indices in depth-first order.
    pub fn leaves(&self) -> Vec<usize> {
        self.leaves_under(self.root)
    }

    pub fn leaves_under(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![i];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.is_leaf() {
                out.push(n);
            } else {
                stack.extend(node.children.iter().rev().copied());
            }
        }
        out
    }

    pub fn leaf_labels(&self) -> Vec<&str> {
        self.leaves().into_iter().map(|i| self.label(i)).collect()
    }

    pub fn leaf_set(&self) -> BTreeSet<String> {
        self.leaf_labels().into_iter().map(str::to_string).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().len()
    }

    pub(crate) fn label(&self, i: usize) -> &str {
        self.nodes[i].label.as_deref().unwrap_or("")
    }

    pub fn find_leaf(&self, label: &str) -> Option<usize> {
        self.leaves().into_iter().find(|&i| self.label(i) == label)
    }

    /// Edges from the root.
    pub fn depth(&self, mut i: usize) -> usize {
        let mut d = 0;
        while let Some(p) = self.parent[i] {
            d += 1;
            i = p;
        }
        d
    }

    pub fn lca(&self, a: usize, b: usize) -> usize {
        let (mut a, mut b) = (a, b);
        let (mut da, mut db) = (self.depth(a), self.depth(b));
        while da > db {
            a = self.parent[a].unwrap();
            da -= 1;
        }
        while db > da {
            b = self.parent[b].unwrap();
            db -= 1;
        }
        while a != b {
            a = self.parent[a].unwrap();
            b = self.parent[b].unwrap();
        }
        a
    }

    /// Leaf sets of the non-root internal nodes, excluding the full set and
    /// singletons.
    pub fn clusters(&self) -> BTreeSet<BTreeSet<String>> {
        let n = self.n_leaves();
        let mut out = BTreeSet::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if i == self.root || node.is_leaf() {
                continue;
            }
            let c: BTreeSet<String> = self.leaves_under(i).into_iter().map(|l| self.label(l).to_string()).collect();
            if c.len() >= 2 && c.len() < n {
                out.insert(c);
            }
        }
        out
    }

    /// Same leaves and same rooted clusters.
    pub fn same_topology(&self, other: &Tree) -> bool {
        self.leaf_set() == other.leaf_set() && self.clusters() == other.clusters()
    }

    /// Whether every internal node sits at least as high as its children.
    pub fn heights_monotone(&self) -> bool {
        self.nodes.iter().all(|n| match n.height {
            Some(h) => n.children.iter().all(|&c| self.nodes[c].height.map_or(false, |hc| hc <= h)),
            None => n.children.iter().all(|&c| self.nodes[c].height.is_none()),
        })
    }

    /// Heights of internal nodes in merge (arena) order.
    pub fn merge_heights(&self) -> Vec<f64> {
        self.nodes.iter().filter(|n| !n.is_leaf()).filter_map(|n| n.height).collect()
    }

    /// Copy with every height removed.
    pub fn without_heights(&self) -> Tree {
        let mut t = self.clone();
        for n in &mut t.nodes {
            n.height = None;
        }
        t
    }
}
