//! Average-link (UPGMA) agglomerative clustering.
//!
//! Node ids: leaves are `0..n`, the internal node created by merge `k` is
//! `n + k`. Merge heights are the average linkage values at which the two
//! clusters were joined.

use std::io::{Read, Write};

use crate::correlate::DistanceMatrix;
use crate::error::{Error, Result};
use crate::io::{
    csv_reader, expect_header, expect_len, fmt_f64, parse_f64, parse_usize, record_line,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    /// Child containing the smaller leaf index.
    pub left: usize,
    pub right: usize,
    pub height: f64,
    /// Number of leaves under the new node.
    pub size: usize,
}

/// Binary merge tree over `n` labelled leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    leaves: Vec<String>,
    merges: Vec<Merge>,
    parent: Vec<usize>,
}

const NO_PARENT: usize = usize::MAX;

impl Dendrogram {
    /// Validates a merge sequence: exactly `n - 1` merges, children created
    /// before their parent, every non-root node used once, sizes additive.
    pub fn from_merges(leaves: Vec<String>, merges: Vec<Merge>) -> Result<Self> {
        let n = leaves.len();
        if n == 0 {
            return Err(Error::invalid("dendrogram needs at least one leaf"));
        }
        if merges.len() != n - 1 {
            return Err(Error::invalid(format!(
                "{n} leaves need {} merges, got {}",
                n - 1,
                merges.len()
            )));
        }
        let total = 2 * n - 1;
        let mut parent = vec![NO_PARENT; total];
        let mut size = vec![1usize; total];
        for (k, m) in merges.iter().enumerate() {
            let node = n + k;
            for child in [m.left, m.right] {
                if child >= node {
                    return Err(Error::invalid(format!(
                        "merge {k} references node {child} before it exists"
                    )));
                }
                if parent[child] != NO_PARENT {
                    return Err(Error::invalid(format!(
                        "node {child} is merged more than once"
                    )));
                }
                parent[child] = node;
            }
            if m.left == m.right {
                return Err(Error::invalid(format!(
                    "merge {k} joins node {} with itself",
                    m.left
                )));
            }
            size[node] = size[m.left] + size[m.right];
            if m.size != size[node] {
                return Err(Error::invalid(format!(
                    "merge {k} records size {}, children sum to {}",
                    m.size, size[node]
                )));
            }
            if !m.height.is_finite() {
                return Err(Error::invalid(format!("merge {k} has non-finite height")));
            }
        }
        Ok(Self {
            leaves,
            merges,
            parent,
        })
    }

    pub fn leaves(&self) -> &[String] {
        &self.leaves
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn root(&self) -> usize {
        2 * self.n_leaves() - 2
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        node < self.n_leaves()
    }

    pub fn children(&self, node: usize) -> Option<(usize, usize)> {
        let n = self.n_leaves();
        (node >= n && node < 2 * n - 1).then(|| {
            let m = &self.merges[node - n];
            (m.left, m.right)
        })
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent.get(node).copied().filter(|&p| p != NO_PARENT)
    }

    /// Height of a node; leaves sit at 0.
    pub fn height(&self, node: usize) -> f64 {
        if self.is_leaf(node) {
            0.0
        } else {
            self.merges[node - self.n_leaves()].height
        }
    }

    pub fn size(&self, node: usize) -> usize {
        if self.is_leaf(node) {
            1
        } else {
            self.merges[node - self.n_leaves()].size
        }
    }

    pub fn leaf_index(&self, name: &str) -> Option<usize> {
        self.leaves.iter().position(|l| l == name)
    }

    /// Leaf indices under `node`, ascending.
    pub fn leaf_set(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.size(node));
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            match self.children(v) {
                Some((l, r)) => {
                    stack.push(l);
                    stack.push(r);
                }
                None => out.push(v),
            }
        }
        out.sort_unstable();
        out
    }

    /// Lowest common ancestor of two nodes.
    pub fn lowest_common_ancestor(&self, a: usize, b: usize) -> usize {
        let mut on_path = vec![false; self.parent.len()];
        let mut v = Some(a);
        while let Some(x) = v {
            on_path[x] = true;
            v = self.parent(x);
        }
        let mut v = b;
        while !on_path[v] {
            v = self
                .parent(v)
                .expect("the root is an ancestor of every node");
        }
        v
    }

    /// Leaf sets of every internal node, by node id minus `n`.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let n = self.n_leaves();
        (n..2 * n - 1).map(|v| self.leaf_set(v)).collect()
    }
}

/// Leaf set under the lowest internal node containing both leaves.
pub fn smallest_common_cluster(d: &Dendrogram, a: usize, b: usize) -> Result<Vec<usize>> {
    let n = d.n_leaves();
    for leaf in [a, b] {
        if leaf >= n {
            return Err(Error::UnknownLeaf(leaf.to_string()));
        }
    }
    if a == b {
        return Err(Error::invalid(
            "smallest common cluster needs two distinct leaves",
        ));
    }
    Ok(d.leaf_set(d.lowest_common_ancestor(a, b)))
}

/// Same as [`smallest_common_cluster`], addressed by leaf name.
pub fn smallest_common_cluster_by_name(d: &Dendrogram, a: &str, b: &str) -> Result<Vec<String>> {
    let ia = d
        .leaf_index(a)
        .ok_or_else(|| Error::UnknownLeaf(a.to_owned()))?;
    let ib = d
        .leaf_index(b)
        .ok_or_else(|| Error::UnknownLeaf(b.to_owned()))?;
    Ok(smallest_common_cluster(d, ia, ib)?
        .into_iter()
        .map(|k| d.leaves[k].clone())
        .collect())
}

#[derive(Clone, Copy)]
struct Candidate {
    dist: f64,
    slot: usize,
}

/// Average-link clustering.
///
/// At each step merges the pair of active clusters with the smallest average
/// cross-pair distance, breaking ties by the smaller node id and then the
/// smaller partner id. Distances to a merged cluster follow the size-weighted
/// Lance-Williams update. Each cluster caches its nearest partner among
/// clusters with a larger node id; only caches that pointed at a merged
/// cluster are rescanned.
pub fn average_link(dist: &DistanceMatrix) -> Result<Dendrogram> {
    let n = dist.n();
    if n < 2 {
        return Err(Error::invalid(format!(
            "clustering needs at least 2 items, got {n}"
        )));
    }
    let mut d = dist.values().to_vec();
    let mut node_of = (0..n).collect::<Vec<usize>>();
    let mut size = vec![1usize; n];
    let mut min_leaf = (0..n).collect::<Vec<usize>>();
    let mut active = vec![true; n];
    let mut nn: Vec<Option<Candidate>> = vec![None; n];

    let scan = |s: usize, d: &[f64], node_of: &[usize], active: &[bool]| -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        for t in 0..n {
            if !active[t] || node_of[t] <= node_of[s] {
                continue;
            }
            let dist = d[s * n + t];
            best = match best {
                Some(b) if b.dist < dist || (b.dist == dist && node_of[b.slot] < node_of[t]) => {
                    Some(b)
                }
                _ => Some(Candidate { dist, slot: t }),
            };
        }
        best
    };

    for s in 0..n {
        nn[s] = scan(s, &d, &node_of, &active);
    }

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        // Global minimum over cached candidates, keyed (dist, id, partner id).
        let mut best: Option<(usize, Candidate)> = None;
        for s in 0..n {
            if !active[s] {
                continue;
            }
            let Some(c) = nn[s] else { continue };
            let better = match best {
                None => true,
                Some((bs, bc)) => {
                    c.dist < bc.dist
                        || (c.dist == bc.dist
                            && (node_of[s], node_of[c.slot]) < (node_of[bs], node_of[bc.slot]))
                }
            };
            if better {
                best = Some((s, c));
            }
        }
        let (x, cand) = best.expect("at least two active clusters remain");
        let y = cand.slot;
        let (sx, sy) = (size[x] as f64, size[y] as f64);
        let total = sx + sy;
        for k in 0..n {
            if !active[k] || k == x || k == y {
                continue;
            }
            let updated = (sx * d[x * n + k] + sy * d[y * n + k]) / total;
            d[x * n + k] = updated;
            d[k * n + x] = updated;
        }
        let (left, right) = if min_leaf[x] < min_leaf[y] {
            (node_of[x], node_of[y])
        } else {
            (node_of[y], node_of[x])
        };
        merges.push(Merge {
            left,
            right,
            height: cand.dist,
            size: size[x] + size[y],
        });

        // The merged cluster takes slot x with the newest (largest) id.
        node_of[x] = n + step;
        size[x] += size[y];
        min_leaf[x] = min_leaf[x].min(min_leaf[y]);
        active[y] = false;
        nn[y] = None;
        nn[x] = None;
        for k in 0..n {
            if !active[k] || k == x {
                continue;
            }
            match nn[k] {
                Some(c) if c.slot == x || c.slot == y => {
                    nn[k] = scan(k, &d, &node_of, &active);
                }
                Some(c) => {
                    // Existing partners have smaller ids than the new node,
                    // so only a strictly smaller distance displaces them.
                    let dk = d[k * n + x];
                    if dk < c.dist {
                        nn[k] = Some(Candidate { dist: dk, slot: x });
                    }
                }
                None => {
                    nn[k] = Some(Candidate {
                        dist: d[k * n + x],
                        slot: x,
                    });
                }
            }
        }
    }
    Dendrogram::from_merges(dist.companies().to_vec(), merges)
}

/// Writes the merge table `step,left,right,height,size`.
pub fn write_merge_table<W: Write + ?Sized>(d: &Dendrogram, out: &mut W) -> Result<()> {
    writeln!(out, "step,left,right,height,size")?;
    for (k, m) in d.merges().iter().enumerate() {
        writeln!(
            out,
            "{k},{},{},{},{}",
            m.left,
            m.right,
            fmt_f64(m.height),
            m.size
        )?;
    }
    Ok(())
}

/// Reads a merge table; leaf names come from elsewhere (e.g. the distance
/// matrix header).
pub fn read_merge_table<R: Read>(rdr: R, source: &str, leaves: Vec<String>) -> Result<Dendrogram> {
    let mut rdr = csv_reader(rdr);
    expect_header(
        &mut rdr,
        source,
        &["step", "left", "right", "height", "size"],
    )?;
    let mut merges = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record_line(&record);
        expect_len(&record, source, 5)?;
        let step = parse_usize(source, line, &record[0])?;
        if step != merges.len() {
            return Err(Error::parse(
                source,
                line,
                format!("expected step {}", merges.len()),
            ));
        }
        merges.push(Merge {
            left: parse_usize(source, line, &record[1])?,
            right: parse_usize(source, line, &record[2])?,
            height: parse_f64(source, line, &record[3])?,
            size: parse_usize(source, line, &record[4])?,
        });
    }
    Dendrogram::from_merges(leaves, merges)
}
