//! Newick serialisation of dendrograms.
//!
//! Branch lengths are height differences: a child hangs `parent height -
//! child height` below its parent, leaves sit at height 0.

use crate::error::{Error, Result};
use crate::hcluster::{Dendrogram, Merge};

fn needs_quotes(name: &str) -> bool {
    name.is_empty()
        || name
            .chars()
            .any(|c| c.is_whitespace() || "()[]':;,".contains(c))
}

fn push_name(out: &mut String, name: &str) {
    if needs_quotes(name) {
        out.push('\'');
        out.push_str(&name.replace('\'', "''"));
        out.push('\'');
    } else {
        out.push_str(name);
    }
}

pub fn to_newick(d: &Dendrogram) -> String {
    enum Visit {
        Enter(usize),
        Comma,
        Close(usize),
    }
    let mut out = String::new();
    let root = d.root();
    let mut stack = vec![Visit::Enter(root)];
    while let Some(v) = stack.pop() {
        match v {
            Visit::Enter(node) => match d.children(node) {
                Some((l, r)) => {
                    out.push('(');
                    stack.push(Visit::Close(node));
                    stack.push(Visit::Enter(r));
                    stack.push(Visit::Comma);
                    stack.push(Visit::Enter(l));
                }
                None => {
                    push_name(&mut out, &d.leaves()[node]);
                    push_length(&mut out, d, node);
                }
            },
            Visit::Comma => out.push(','),
            Visit::Close(node) => {
                out.push(')');
                push_length(&mut out, d, node);
            }
        }
    }
    out.push(';');
    out
}

fn push_length(out: &mut String, d: &Dendrogram, node: usize) {
    if let Some(p) = d.parent(node) {
        let len = d.height(p) - d.height(node);
        out.push(':');
        out.push_str(&len.to_string());
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

enum Tree {
    Leaf(String, f64),
    Node(Box<Tree>, Box<Tree>, f64),
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(
            "newick",
            1,
            format!("column {}: {}", self.pos + 1, msg.into()),
        )
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{}`", c as char)))
        }
    }

    fn name(&mut self) -> Result<String> {
        self.skip_ws();
        if self.peek() == Some(b'\'') {
            self.pos += 1;
            let mut out = Vec::new();
            loop {
                match self.src.get(self.pos) {
                    None => return Err(self.err("unterminated quoted label")),
                    Some(b'\'') if self.src.get(self.pos + 1) == Some(&b'\'') => {
                        out.push(b'\'');
                        self.pos += 2;
                    }
                    Some(b'\'') => {
                        self.pos += 1;
                        break;
                    }
                    Some(&c) => {
                        out.push(c);
                        self.pos += 1;
                    }
                }
            }
            return String::from_utf8(out).map_err(|_| self.err("label is not UTF-8"));
        }
        let start = self.pos;
        while let Some(&c) = self.src.get(self.pos) {
            if c.is_ascii_whitespace() || b"()[]':;,".contains(&c) {
                break;
            }
            self.pos += 1;
        }
        String::from_utf8(self.src[start..self.pos].to_vec())
            .map_err(|_| self.err("label is not UTF-8"))
    }

    fn length(&mut self) -> Result<f64> {
        if self.peek() != Some(b':') {
            return Ok(0.0);
        }
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        while let Some(&c) = self.src.get(self.pos) {
            if c.is_ascii_digit() || b"+-.eE".contains(&c) || c.is_ascii_alphabetic() {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        text.parse::<f64>()
            .map_err(|_| self.err(format!("bad branch length `{text}`")))
    }

    fn subtree(&mut self, depth: usize) -> Result<Tree> {
        if depth > 100_000 {
            return Err(self.err("tree nested too deeply"));
        }
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let left = self.subtree(depth + 1)?;
            self.expect(b',')?;
            let right = self.subtree(depth + 1)?;
            if self.peek() == Some(b',') {
                return Err(self.err("only binary trees are supported"));
            }
            self.expect(b')')?;
            // Internal node labels are accepted and ignored.
            if !matches!(self.peek(), Some(b':' | b',' | b')' | b';') | None) {
                self.name()?;
            }
            let len = self.length()?;
            Ok(Tree::Node(Box::new(left), Box::new(right), len))
        } else {
            let name = self.name()?;
            if name.is_empty() {
                return Err(self.err("expected a leaf label"));
            }
            let len = self.length()?;
            Ok(Tree::Leaf(name, len))
        }
    }
}

/// Parses a binary Newick tree back into a dendrogram.
///
/// Leaves are numbered in order of appearance. Node heights are rebuilt from
/// branch lengths (missing lengths count as 0); internal nodes are numbered
/// by ascending height, children before parents.
pub fn parse_newick(text: &str) -> Result<Dendrogram> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let tree = p.subtree(0)?;
    p.expect(b';')?;
    if p.peek().is_some() {
        return Err(p.err("trailing characters after `;`"));
    }

    let mut leaves = Vec::new();
    // (left, right, height) with children given as temporary ids; leaves
    // are `Ok(leaf index)`, internal nodes `Err(internal index)`.
    let mut internal: Vec<(
        std::result::Result<usize, usize>,
        std::result::Result<usize, usize>,
        f64,
    )> = Vec::new();
    fn walk(
        t: &Tree,
        leaves: &mut Vec<String>,
        internal: &mut Vec<(
            std::result::Result<usize, usize>,
            std::result::Result<usize, usize>,
            f64,
        )>,
    ) -> (std::result::Result<usize, usize>, f64, f64) {
        match t {
            Tree::Leaf(name, len) => {
                leaves.push(name.clone());
                (Ok(leaves.len() - 1), 0.0, *len)
            }
            Tree::Node(l, r, len) => {
                let (lid, lh, llen) = walk(l, leaves, internal);
                let (rid, rh, rlen) = walk(r, leaves, internal);
                let h = (lh + llen).max(rh + rlen);
                internal.push((lid, rid, h));
                (Err(internal.len() - 1), h, *len)
            }
        }
    }
    let (root, _, _) = walk(&tree, &mut leaves, &mut internal);
    if root.is_ok() {
        return Err(Error::invalid("a Newick tree needs at least two leaves"));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = leaves.iter().find(|l| !seen.insert(l.as_str())) {
        return Err(Error::invalid(format!("duplicate leaf `{dup}`")));
    }

    let n = leaves.len();
    // Post-order index breaks height ties so children precede parents.
    let mut order: Vec<usize> = (0..internal.len()).collect();
    order.sort_by(|&a, &b| internal[a].2.total_cmp(&internal[b].2).then(a.cmp(&b)));
    let mut node_id = vec![0usize; internal.len()];
    for (k, &idx) in order.iter().enumerate() {
        node_id[idx] = n + k;
    }
    let resolve = |c: std::result::Result<usize, usize>| match c {
        Ok(leaf) => leaf,
        Err(k) => node_id[k],
    };
    let mut sizes = vec![1usize; 2 * n - 1];
    let mut min_leaf: Vec<usize> = (0..2 * n - 1).collect();
    let mut merges = Vec::with_capacity(n - 1);
    for &idx in &order {
        let (l, r, h) = internal[idx];
        let (a, b) = (resolve(l), resolve(r));
        let (left, right) = if min_leaf[a] <= min_leaf[b] {
            (a, b)
        } else {
            (b, a)
        };
        let id = node_id[idx];
        sizes[id] = sizes[a] + sizes[b];
        min_leaf[id] = min_leaf[a].min(min_leaf[b]);
        merges.push(Merge {
            left,
            right,
            height: h,
            size: sizes[id],
        });
    }
    Dendrogram::from_merges(leaves, merges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlate::DistanceMatrix;
    use crate::hcluster::average_link;

    fn tree(rows: &[Vec<f64>]) -> Dendrogram {
        let names = (0..rows.len())
            .map(|i| ((b'A' + i as u8) as char).to_string())
            .collect();
        average_link(&DistanceMatrix::from_rows(names, rows).unwrap()).unwrap()
    }

    #[test]
    fn two_leaves() {
        let t = tree(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(to_newick(&t), "(A:1,B:1);");
    }

    #[test]
    fn three_leaves() {
        let t = tree(&[
            vec![0.0, 1.0, 4.0],
            vec![1.0, 0.0, 5.0],
            vec![4.0, 5.0, 0.0],
        ]);
        assert_eq!(to_newick(&t), "((A:1,B:1):3.5,C:4.5);");
    }

    #[test]
    fn parse_back_reproduces_topology_and_heights() {
        let t = tree(&[
            vec![0.0, 1.0, 4.0],
            vec![1.0, 0.0, 5.0],
            vec![4.0, 5.0, 0.0],
        ]);
        let back = parse_newick(&to_newick(&t)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn quoted_labels() {
        let d = Dendrogram::from_merges(
            vec!["it's a".into(), "b,c".into()],
            vec![Merge {
                left: 0,
                right: 1,
                height: 0.5,
                size: 2,
            }],
        )
        .unwrap();
        let s = to_newick(&d);
        assert_eq!(s, "('it''s a':0.5,'b,c':0.5);");
        assert_eq!(parse_newick(&s).unwrap(), d);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(parse_newick("(A,B)").is_err());
        assert!(parse_newick("(A,B,C);").is_err());
        assert!(parse_newick("A;").is_err());
        assert!(parse_newick("(A,A);").is_err());
        assert!(parse_newick("(A:x,B);").is_err());
    }

    #[test]
    fn lengths_are_optional() {
        let t = parse_newick("((A,B),C);").unwrap();
        assert_eq!(t.n_leaves(), 3);
        assert_eq!(t.leaf_set(t.root()), vec![0, 1, 2]);
    }
}
