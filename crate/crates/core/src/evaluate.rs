//! Hierarchical purity of labelled groups and its permutation significance.
//!
//! For a group of `M` leaves, every unordered member pair `(a, b)` is scored
//! by the fraction of group members in the smallest cluster containing both;
//! purity is the mean over all `M (M - 1) / 2` pairs.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hcluster::Dendrogram;
use crate::io::{
    csv_reader, expect_header, expect_len, fmt_f64, parse_f64, parse_usize, record_line,
};
use crate::panel::{CompanyMeta, Grouping};

/// Default number of permutation replicates.
pub const DEFAULT_REPLICATES: usize = 999;

/// Exact integer form of a purity score.
///
/// `weighted[s]` sums, over member pairs whose smallest common cluster has
/// `s` leaves, the number of members in that cluster. The score is
/// `sum_s weighted[s] / s` divided by the pair count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PurityTally {
    pub pairs: u64,
    pub weighted: Vec<u64>,
}

impl PurityTally {
    pub fn new(n_leaves: usize) -> Self {
        Self {
            pairs: 0,
            weighted: vec![0; n_leaves + 1],
        }
    }

    /// Records one pair whose smallest common cluster has `size` leaves,
    /// `members` of them in the group.
    pub fn add_pair(&mut self, size: usize, members: u64) {
        self.pairs += 1;
        self.weighted[size] += members;
    }

    /// The score as a reduced fraction, or `None` if it overflows `u128`.
    pub fn exact(&self) -> Option<(u128, u128)> {
        let (mut num, mut den) = (0u128, 1u128);
        for (s, &w) in self.weighted.iter().enumerate().filter(|(_, w)| **w > 0) {
            let s = s as u128;
            num = num
                .checked_mul(s)?
                .checked_add((w as u128).checked_mul(den)?)?;
            den = den.checked_mul(s)?;
            let g = gcd(num, den);
            num /= g;
            den /= g;
        }
        den = den.checked_mul(self.pairs as u128)?;
        let g = gcd(num, den);
        Some((num / g, den / g))
    }

    /// Correctly rounded whenever the reduced fraction has numerator and
    /// denominator below 2^53.
    pub fn score(&self) -> f64 {
        const EXACT: u128 = 1 << 53;
        if let Some((num, den)) = self.exact() {
            if num < EXACT && den < EXACT && den > 0 {
                return num as f64 / den as f64;
            }
        }
        let sum: f64 = self
            .weighted
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0)
            .map(|(s, w)| *w as f64 / s as f64)
            .sum();
        sum / self.pairs as f64
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// Purity tally of the leaf set flagged in `members`.
///
/// Each internal node with children holding `l` and `r` members is the
/// smallest common cluster of exactly `l * r` member pairs.
pub fn purity_tally(d: &Dendrogram, members: &[bool]) -> Result<PurityTally> {
    let n = d.n_leaves();
    if members.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: members.len(),
        });
    }
    let mut count: Vec<u64> = Vec::with_capacity(2 * n - 1);
    count.extend(members.iter().map(|&m| m as u64));
    let mut tally = PurityTally::new(n);
    for m in d.merges() {
        let (l, r) = (count[m.left], count[m.right]);
        let c = l + r;
        let pairs = l * r;
        if pairs > 0 {
            tally.pairs += pairs;
            tally.weighted[m.size] += pairs * c;
        }
        count.push(c);
    }
    Ok(tally)
}

fn member_mask(labels: &[String], group: &str) -> Vec<bool> {
    labels.iter().map(|l| l == group).collect()
}

fn check_labels(d: &Dendrogram, labels: &[String]) -> Result<()> {
    if labels.len() != d.n_leaves() {
        return Err(Error::Dimension {
            expected: d.n_leaves(),
            got: labels.len(),
        });
    }
    Ok(())
}

/// Purity of `group`, where `labels[k]` is the label of leaf `k`.
pub fn purity(d: &Dendrogram, labels: &[String], group: &str) -> Result<f64> {
    check_labels(d, labels)?;
    let mask = member_mask(labels, group);
    let count = mask.iter().filter(|m| **m).count();
    if count < 2 {
        return Err(Error::GroupTooSmall {
            label: group.to_owned(),
            count,
        });
    }
    Ok(purity_tally(d, &mask)?.score())
}

/// Purity of an explicit leaf subset scored against its own membership.
pub fn subset_purity(d: &Dendrogram, subset: &[usize]) -> Result<f64> {
    let n = d.n_leaves();
    let mut mask = vec![false; n];
    for &k in subset {
        if k >= n {
            return Err(Error::UnknownLeaf(k.to_string()));
        }
        mask[k] = true;
    }
    let count = mask.iter().filter(|m| **m).count();
    if count < 2 {
        return Err(Error::invalid(format!(
            "subset purity needs at least 2 distinct leaves, got {count}"
        )));
    }
    Ok(purity_tally(d, &mask)?.score())
}

/// Leaf labels under a grouping, aligned with the dendrogram's leaf order.
pub fn leaf_labels(
    d: &Dendrogram,
    meta: &[CompanyMeta],
    grouping: Grouping,
) -> Result<Vec<String>> {
    let by_id: std::collections::HashMap<&str, &CompanyMeta> =
        meta.iter().map(|m| (m.id.as_str(), m)).collect();
    d.leaves()
        .iter()
        .map(|leaf| {
            by_id
                .get(leaf.as_str())
                .map(|m| m.label(grouping).to_owned())
                .ok_or_else(|| Error::MissingMetadata(leaf.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationResult {
    pub observed: f64,
    pub p_value: f64,
    pub replicates: usize,
    /// Replicates scoring at least the observed purity.
    pub at_least_observed: usize,
    pub replicate_mean: f64,
    pub replicate_max: f64,
}

/// `(1 + #{replicates >= observed}) / (B + 1)`.
pub fn add_one_p_value(at_least: usize, replicates: usize) -> f64 {
    (1 + at_least) as f64 / (replicates + 1) as f64
}

fn summarize(observed: f64, scores: &[f64]) -> PermutationResult {
    let at_least = scores.iter().filter(|s| **s >= observed).count();
    let b = scores.len();
    PermutationResult {
        observed,
        p_value: add_one_p_value(at_least, b),
        replicates: b,
        at_least_observed: at_least,
        replicate_mean: if b == 0 {
            f64::NAN
        } else {
            scores.iter().sum::<f64>() / b as f64
        },
        replicate_max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Significance against an explicit set of replicate subsets.
pub fn p_value_from_subsets(
    d: &Dendrogram,
    observed: f64,
    subsets: &[Vec<usize>],
) -> Result<PermutationResult> {
    if subsets.is_empty() {
        return Err(Error::invalid("at least one replicate is required"));
    }
    let scores = subsets
        .iter()
        .map(|s| subset_purity(d, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(observed, &scores))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn label_seed(seed: u64, group: &str) -> u64 {
    // FNV-1a over the label, mixed with the run seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in group.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(seed ^ splitmix64(h))
}

/// Permutation test for one group: `B` uniformly random `M`-subsets of all
/// leaves, each scored against its own membership.
///
/// Replicate `r` draws from its own ChaCha stream derived from `seed` and the
/// group label, so results do not depend on thread scheduling. Draws index
/// leaves in name order, so the same tree read from a merge table or from
/// Newick gets the same p-value.
pub fn permutation_p_value(
    d: &Dendrogram,
    labels: &[String],
    group: &str,
    replicates: usize,
    seed: u64,
) -> Result<PermutationResult> {
    let observed = purity(d, labels, group)?;
    let n = d.n_leaves();
    let m = labels.iter().filter(|l| *l == group).count();
    if m > n {
        return Err(Error::invalid(format!("group size {m} exceeds {n} leaves")));
    }
    if replicates == 0 {
        return Err(Error::invalid("at least one replicate is required"));
    }
    let mut by_name: Vec<usize> = (0..n).collect();
    by_name.sort_by(|&a, &b| d.leaves()[a].cmp(&d.leaves()[b]));
    let stream_seed = label_seed(seed, group);
    let scores: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
            rng.set_stream(r as u64);
            let mut mask = vec![false; n];
            for k in rand::seq::index::sample(&mut rng, n, m) {
                mask[by_name[k]] = true;
            }
            purity_tally(d, &mask).map(|t| t.score())
        })
        .collect::<Result<_>>()?;
    Ok(summarize(observed, &scores))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PurityRow {
    pub label: String,
    pub members: usize,
    pub purity: f64,
    pub p_value: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PurityReport {
    pub grouping: Grouping,
    pub rows: Vec<PurityRow>,
}

impl PurityReport {
    pub fn mean_purity(&self) -> f64 {
        self.rows.iter().map(|r| r.purity).sum::<f64>() / self.rows.len() as f64
    }

    pub fn row(&self, label: &str) -> Option<&PurityRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// One row per label with at least two leaves, labels in sorted order.
pub fn purity_report(
    d: &Dendrogram,
    meta: &[CompanyMeta],
    grouping: Grouping,
    replicates: usize,
    seed: u64,
) -> Result<PurityReport> {
    let labels = leaf_labels(d, meta, grouping)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in &labels {
        *counts.entry(l.as_str()).or_default() += 1;
    }
    let rows = counts
        .into_iter()
        .filter(|(_, c)| *c >= 2)
        .map(|(label, members)| {
            let res = permutation_p_value(d, &labels, label, replicates, seed)?;
            Ok(PurityRow {
                label: label.to_owned(),
                members,
                purity: res.observed,
                p_value: res.p_value,
                replicates,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Err(Error::invalid(format!(
            "no {grouping} label has at least two members"
        )));
    }
    Ok(PurityReport { grouping, rows })
}

pub fn write_purity_header<W: Write + ?Sized>(out: &mut W) -> Result<()> {
    writeln!(out, "grouping,label,M,purity,p_value,B")?;
    Ok(())
}

pub fn write_purity_rows<W: Write + ?Sized>(report: &PurityReport, out: &mut W) -> Result<()> {
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            report.grouping,
            r.label,
            r.members,
            fmt_f64(r.purity),
            fmt_f64(r.p_value),
            r.replicates
        )?;
    }
    Ok(())
}

/// Reads one or more reports back, one per grouping in order of appearance.
pub fn read_purity_reports<R: Read>(rdr: R, source: &str) -> Result<Vec<PurityReport>> {
    let mut rdr = csv_reader(rdr);
    expect_header(
        &mut rdr,
        source,
        &["grouping", "label", "M", "purity", "p_value", "B"],
    )?;
    let mut out: Vec<PurityReport> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record_line(&record);
        expect_len(&record, source, 6)?;
        let grouping: Grouping = record[0]
            .parse()
            .map_err(|e: Error| Error::parse(source, line, e.to_string()))?;
        let row = PurityRow {
            label: record[1].to_owned(),
            members: parse_usize(source, line, &record[2])?,
            purity: parse_f64(source, line, &record[3])?,
            p_value: parse_f64(source, line, &record[4])?,
            replicates: parse_usize(source, line, &record[5])?,
        };
        match out.last_mut() {
            Some(rep) if rep.grouping == grouping => rep.rows.push(row),
            _ => out.push(PurityReport {
                grouping,
                rows: vec![row],
            }),
        }
    }
    Ok(out)
}

impl fmt::Display for PurityReport {
    /// Aligned human-readable table.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .rows
            .iter()
            .map(|r| r.label.chars().count())
            .max()
            .unwrap_or(0)
            .max(self.grouping.as_str().len());
        writeln!(
            f,
            "{:<width$}  {:>5}  {:>7}  {:>8}",
            self.grouping.as_str(),
            "M",
            "purity",
            "p-value"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<width$}  {:>5}  {:>7.3}  {:>8.3}",
                r.label, r.members, r.purity, r.p_value
            )?;
        }
        write!(
            f,
            "{:<width$}  {:>5}  {:>7.3}",
            "mean",
            "",
            self.mean_purity()
        )
    }
}
