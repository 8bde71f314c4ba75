//! Single-line Newick. Heights go out as branch lengths (parent height minus
//! child height) and come back as the longest leaf-ward path sum.

use std::collections::HashMap;

use super::tree::{Node, Tree};
use super::PhyloError;

const RESERVED: &[char] = &['(', ')', ',', ':', ';', '\'', '[', ']'];

fn quote(label: &str) -> String {
    if label.is_empty() || label.chars().any(|c| RESERVED.contains(&c) || c.is_whitespace()) {
        format!("'{}'", label.replace('\'', "''"))
    } else {
        label.to_string()
    }
}

pub fn to_newick(tree: &Tree) -> String {
    fn write(t: &Tree, i: usize, parent_height: Option<f64>, out: &mut String) {
        let n = t.node(i);
        if !n.is_leaf() {
            out.push('(');
            for (k, &c) in n.children.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write(t, c, n.height, out);
            }
            out.push(')');
        }
        if let Some(l) = &n.label {
            out.push_str(&quote(l));
        }
        if let (Some(ph), Some(h)) = (parent_height, n.height) {
            out.push(':');
            out.push_str(&format!("{}", ph - h));
        }
    }
    let mut s = String::new();
    write(tree, tree.root(), None, &mut s);
    s.push(';');
    s
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    nodes: Vec<Node>,
    lengths: Vec<Option<f64>>,
    labels: HashMap<String, usize>,
}

impl Parser {
    fn err(&self, position: usize, message: impl Into<String>) -> PhyloError {
        PhyloError::Newick { position, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn label(&mut self) -> Result<Option<(usize, String)>, PhyloError> {
        let start = match self.peek() {
            Some(_) => self.pos,
            None => return Ok(None),
        };
        if self.chars[self.pos] == '\'' {
            self.pos += 1;
            let mut s = String::new();
            loop {
                match self.chars.get(self.pos) {
                    None => return Err(self.err(start, "unterminated quoted label")),
                    Some('\'') if self.chars.get(self.pos + 1) == Some(&'\'') => {
                        s.push('\'');
                        self.pos += 2;
                    }
                    Some('\'') => {
                        self.pos += 1;
                        return Ok(Some((start, s)));
                    }
                    Some(&c) => {
                        s.push(c);
                        self.pos += 1;
                    }
                }
            }
        }
        let mut s = String::new();
        while let Some(&c) = self.chars.get(self.pos) {
            if RESERVED.contains(&c) {
                break;
            }
            s.push(c);
            self.pos += 1;
        }
        let s = s.trim_end().to_string();
        Ok(if s.is_empty() { None } else { Some((start, s)) })
    }

    fn length(&mut self) -> Result<Option<f64>, PhyloError> {
        if self.peek() != Some(':') {
            return Ok(None);
        }
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        while self.chars.get(self.pos).is_some_and(|c| !RESERVED.contains(c) && !c.is_whitespace()) {
            self.pos += 1;
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        match text.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Some(x)),
            _ => Err(self.err(start, format!("bad branch length {text:?}"))),
        }
    }

    fn subtree(&mut self) -> Result<usize, PhyloError> {
        let mut children = Vec::new();
        let open = self.peek().filter(|&c| c == '(').map(|_| self.pos);
        if let Some(open) = open {
            self.pos += 1;
            loop {
                children.push(self.subtree()?);
                match self.peek() {
                    Some(',') => self.pos += 1,
                    Some(')') => {
                        self.pos += 1;
                        break;
                    }
                    None | Some(';') => return Err(self.err(open, "unbalanced parentheses: '(' is never closed")),
                    Some(c) => return Err(self.err(self.pos, format!("unexpected {c:?}"))),
                }
            }
        }
        let label = self.label()?;
        if children.is_empty() && label.is_none() {
            let msg = match self.peek() {
                Some(')') if open.is_none() => "empty leaf label",
                None => "unexpected end of input",
                _ => "empty leaf label",
            };
            return Err(self.err(self.pos, msg));
        }
        if let Some((at, l)) = &label {
            if self.labels.insert(l.clone(), *at).is_some() {
                return Err(self.err(*at, format!("duplicate label {l:?}")));
            }
        }
        let len = self.length()?;
        self.nodes.push(Node { label: label.map(|(_, l)| l), children, height: None });
        self.lengths.push(len);
        Ok(self.nodes.len() - 1)
    }
}

pub fn parse_newick(text: &str) -> Result<Tree, PhyloError> {
    let mut p = Parser { chars: text.chars().collect(), pos: 0, nodes: vec![], lengths: vec![], labels: HashMap::new() };
    let root = p.subtree()?;
    match p.peek() {
        Some(';') => p.pos += 1,
        Some(')') => return Err(p.err(p.pos, "unbalanced parentheses: unmatched ')'")),
        Some(c) => return Err(p.err(p.pos, format!("unexpected {c:?}, expected ';'"))),
        None => return Err(p.err(p.pos, "missing ';'")),
    }
    if p.peek().is_some() {
        return Err(p.err(p.pos, "text after ';'"));
    }
    // heights only when every non-root edge has a length
    let all_lengths = p.lengths.iter().enumerate().all(|(i, l)| i == root || l.is_some());
    if all_lengths {
        // children precede parents in the arena
        for i in 0..p.nodes.len() {
            let h = p.nodes[i].children.iter().map(|&c| p.nodes[c].height.unwrap() + p.lengths[c].unwrap()).fold(0.0, f64::max);
            p.nodes[i].height = Some(h);
        }
    }
    Tree::new(p.nodes, root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_leaves() {
        let t = parse_newick("(A,B);").unwrap();
        assert_eq!(t.leaf_labels(), ["A", "B"]);
        assert_eq!(to_newick(&t), "(A,B);");
    }

    #[test]
    fn trifurcating_root() {
        let t = parse_newick("((A,B),(C,D),E);").unwrap();
        assert_eq!(t.node(t.root()).children.len(), 3);
        assert_eq!(t.clusters().len(), 2);
    }

    #[test]
    fn lengths_become_heights() {
        let t = parse_newick("((A:1,B:1):2,C:3);").unwrap();
        assert_eq!(t.node(t.root()).height, Some(3.0));
        assert_eq!(to_newick(&t), "((A:1,B:1):2,C:3);");
    }

    #[test]
    fn quoted_labels() {
        let t = parse_newick("('Old French','it''s');").unwrap();
        assert_eq!(t.leaf_labels(), ["Old French", "it's"]);
        assert_eq!(to_newick(&t), "('Old French','it''s');");
    }

    #[test]
    fn errors_carry_positions() {
        assert_eq!(parse_newick("((A,B);").unwrap_err(), PhyloError::Newick { position: 0, message: "unbalanced parentheses: '(' is never closed".into() });
        assert!(matches!(parse_newick("(A,B));"), Err(PhyloError::Newick { position: 5, .. })));
        assert!(matches!(parse_newick("(A,(B,A));"), Err(PhyloError::Newick { position: 6, .. })));
        assert!(matches!(parse_newick("(A,B)"), Err(PhyloError::Newick { position: 5, .. })));
        assert!(matches!(parse_newick("(A,,B);"), Err(PhyloError::Newick { position: 3, .. })));
        assert!(matches!(parse_newick("(A:x,B);"), Err(PhyloError::Newick { position: 3, .. })));
    }
}
