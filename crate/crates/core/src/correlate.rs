//! Static Pearson correlation, the correlation distance
//! `w = sqrt(2 (1 - rho))`, and exponentially forgetting dynamic correlation.

use std::io::{Read, Write};

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{csv_reader, expect_header, expect_len, fmt_f64, parse_f64, record_line};
use crate::panel::ReturnsPanel;

/// Symmetric matrix of pairwise correlations, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    companies: Vec<String>,
    values: Vec<f64>,
}

impl CorrelationMatrix {
    /// Checks shape, finiteness and symmetry only; range is checked by
    /// [`to_distance`].
    pub fn new(companies: Vec<String>, values: Vec<f64>) -> Result<Self> {
        check_square(&companies, &values)?;
        check_symmetric(companies.len(), &values)?;
        Ok(Self { companies, values })
    }

    pub fn companies(&self) -> &[String] {
        &self.companies
    }

    pub fn n(&self) -> usize {
        self.companies.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Symmetric nonnegative dissimilarity matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    companies: Vec<String>,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(companies: Vec<String>, values: Vec<f64>) -> Result<Self> {
        check_square(&companies, &values)?;
        let n = companies.len();
        check_symmetric(n, &values)?;
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::invalid(format!(
                    "distance diagonal entry {i} is {}, expected 0",
                    values[i * n + i]
                )));
            }
        }
        if let Some(k) = values.iter().position(|v| *v < 0.0) {
            return Err(Error::invalid(format!(
                "negative distance {} at ({}, {})",
                values[k],
                k / n,
                k % n
            )));
        }
        Ok(Self { companies, values })
    }

    /// Builds a matrix from row slices, mostly for tests and bindings.
    pub fn from_rows(companies: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let values = rows.iter().flatten().copied().collect();
        if rows.len() != companies.len() {
            return Err(Error::Dimension {
                expected: companies.len(),
                got: rows.len(),
            });
        }
        Self::new(companies, values)
    }

    pub fn companies(&self) -> &[String] {
        &self.companies
    }

    pub fn n(&self) -> usize {
        self.companies.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same distances with companies reordered so that new index `k` is old
    /// index `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let n = self.n();
        if order.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: order.len(),
            });
        }
        let companies = order.iter().map(|&k| self.companies[k].clone()).collect();
        let mut values = vec![0.0; n * n];
        for (a, &i) in order.iter().enumerate() {
            for (b, &j) in order.iter().enumerate() {
                values[a * n + b] = self.get(i, j);
            }
        }
        Self::new(companies, values)
    }
}

fn check_square(companies: &[String], values: &[f64]) -> Result<()> {
    let n = companies.len();
    if values.len() != n * n {
        return Err(Error::Dimension {
            expected: n * n,
            got: values.len(),
        });
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite matrix entry {v}")));
    }
    Ok(())
}

fn check_symmetric(n: usize, values: &[f64]) -> Result<()> {
    for i in 0..n {
        for j in (i + 1)..n {
            if values[i * n + j] != values[j * n + i] {
                return Err(Error::invalid(format!(
                    "matrix is not symmetric at ({i}, {j}): {} vs {}",
                    values[i * n + j],
                    values[j * n + i]
                )));
            }
        }
    }
    Ok(())
}

/// Sample Pearson correlation of every pair of companies over all days.
pub fn pearson(panel: &ReturnsPanel) -> Result<CorrelationMatrix> {
    let n = panel.n_companies();
    let t = panel.n_days();
    if t < 2 {
        return Err(Error::invalid(format!(
            "correlation needs at least 2 days, got {t}"
        )));
    }
    let mut centered = Vec::with_capacity(n);
    for (id, row) in panel.companies.iter().zip(&panel.returns) {
        let mean = row.iter().sum::<f64>() / t as f64;
        let c: Vec<f64> = row.iter().map(|r| r - mean).collect();
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroVariance(id.clone()));
        }
        centered.push((c, norm));
    }
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (ci, ni) = &centered[i];
            ((i + 1)..n)
                .map(|j| {
                    let (cj, nj) = &centered[j];
                    let dot: f64 = ci.iter().zip(cj).map(|(a, b)| a * b).sum();
                    (dot / (ni * nj)).clamp(-1.0, 1.0)
                })
                .collect()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        values[i * n + i] = 1.0;
        for (k, rho) in row.iter().enumerate() {
            let j = i + 1 + k;
            values[i * n + j] = *rho;
            values[j * n + i] = *rho;
        }
    }
    CorrelationMatrix::new(panel.companies.clone(), values)
}

#[inline]
pub fn correlation_distance(rho: f64) -> f64 {
    (2.0 * (1.0 - rho)).max(0.0).sqrt()
}

/// Maps each correlation to `sqrt(2 (1 - rho))`; entries outside `[-1, 1]`
/// are rejected.
pub fn to_distance(corr: &CorrelationMatrix) -> Result<DistanceMatrix> {
    let n = corr.n();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let rho = corr.get(i, j);
            if !(-1.0..=1.0).contains(&rho) {
                return Err(Error::CorrelationRange {
                    row: i,
                    col: j,
                    value: rho,
                });
            }
            values[i * n + j] = if i == j {
                0.0
            } else {
                correlation_distance(rho)
            };
        }
    }
    DistanceMatrix::new(corr.companies.clone(), values)
}

#[inline]
fn packed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Running exponentially forgetting variances and pairwise correlations.
///
/// Only the strict upper triangle of the correlation matrix is stored; the
/// diagonal is taken to be 1.
#[derive(Debug, Clone, PartialEq)]
pub struct EwState {
    t: usize,
    lambda: f64,
    var: Vec<f64>,
    rho: Vec<f64>,
}

impl EwState {
    /// Zero-initialised state for `n` series.
    pub fn new(n: usize, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid(format!(
                "forgetting factor {lambda} outside [0, 1]"
            )));
        }
        Ok(Self {
            t: 0,
            lambda,
            var: vec![0.0; n],
            rho: vec![0.0; n * n.saturating_sub(1) / 2],
        })
    }

    pub fn n(&self) -> usize {
        self.var.len()
    }

    /// Number of steps applied so far.
    pub fn steps(&self) -> usize {
        self.t
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn variances(&self) -> &[f64] {
        &self.var
    }

    /// Running correlation, unclamped. The diagonal is 1.
    pub fn rho(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => self.rho[packed_index(self.n(), i, j)],
            std::cmp::Ordering::Greater => self.rho[packed_index(self.n(), j, i)],
        }
    }

    /// Advances one day. All variances are updated first; correlations then
    /// use the updated deviations. Pairs where either deviation is zero keep
    /// their previous value.
    pub fn step(&mut self, returns: &[f64]) -> Result<()> {
        let n = self.n();
        if returns.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: returns.len(),
            });
        }
        let lambda = self.lambda;
        let keep = 1.0 - lambda;
        for (v, r) in self.var.iter_mut().zip(returns) {
            *v = keep * *v + lambda * r * r;
        }
        let sigma: Vec<f64> = self.var.iter().map(|v| v.sqrt()).collect();
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if sigma[i] > 0.0 && sigma[j] > 0.0 {
                    let term = returns[i] * returns[j] / (sigma[i] * sigma[j]);
                    self.rho[k] = keep * self.rho[k] + lambda * term;
                }
                k += 1;
            }
        }
        self.t += 1;
        Ok(())
    }

    /// Distances from the current correlations clamped into `[-1, 1]`.
    pub fn distance_matrix(&self, companies: &[String]) -> Result<DistanceMatrix> {
        let n = self.n();
        if companies.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: companies.len(),
            });
        }
        let mut values = vec![0.0; n * n];
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                let w = correlation_distance(self.rho[k].clamp(-1.0, 1.0));
                values[i * n + j] = w;
                values[j * n + i] = w;
                k += 1;
            }
        }
        DistanceMatrix::new(companies.to_vec(), values)
    }
}

/// Functional form of [`EwState::step`].
pub fn ew_step(state: &EwState, returns: &[f64]) -> Result<EwState> {
    let mut next = state.clone();
    next.step(returns)?;
    Ok(next)
}

/// Three mean lifetimes of the forgetting window: `ceil(3 / lambda)`.
pub fn default_burn_in(lambda: f64) -> usize {
    // Absorb the representation error of lambda so 3 / 0.01 gives 300.
    (3.0 / lambda - 1e-9).ceil().max(0.0) as usize
}

/// Lazily emits `(date, distances)` for every day index `>= burn_in`.
pub struct EwDistances<'a> {
    panel: &'a ReturnsPanel,
    state: EwState,
    burn_in: usize,
    next_day: usize,
}

impl<'a> EwDistances<'a> {
    pub fn new(panel: &'a ReturnsPanel, lambda: f64, burn_in: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::invalid(format!(
                "forgetting factor {lambda} must lie in (0, 1)"
            )));
        }
        Ok(Self {
            panel,
            state: EwState::new(panel.n_companies(), lambda)?,
            burn_in,
            next_day: 0,
        })
    }

    /// Number of matrices the iterator will emit in total.
    pub fn emitted_len(&self) -> usize {
        self.panel.n_days().saturating_sub(self.burn_in)
    }
}

impl Iterator for EwDistances<'_> {
    type Item = Result<(NaiveDate, DistanceMatrix)>;

    fn next(&mut self) -> Option<Self::Item> {
        while self.next_day < self.panel.n_days() {
            let t = self.next_day;
            self.next_day += 1;
            if let Err(e) = self.state.step(&self.panel.day(t)) {
                return Some(Err(e));
            }
            if t >= self.burn_in {
                return Some(
                    self.state
                        .distance_matrix(&self.panel.companies)
                        .map(|d| (self.panel.dates[t], d)),
                );
            }
        }
        None
    }
}

/// Eager form of [`EwDistances`].
pub fn ew_distance_series(
    panel: &ReturnsPanel,
    lambda: f64,
    burn_in: usize,
) -> Result<Vec<(NaiveDate, DistanceMatrix)>> {
    EwDistances::new(panel, lambda, burn_in)?.collect()
}

/// Square table with a header row `id,<id_1>,...` and one row per company.
pub fn write_square<W: Write + ?Sized>(
    companies: &[String],
    values: &[f64],
    out: &mut W,
) -> Result<()> {
    let n = companies.len();
    write!(out, "id")?;
    for id in companies {
        write!(out, ",{id}")?;
    }
    writeln!(out)?;
    for (i, id) in companies.iter().enumerate() {
        write!(out, "{id}")?;
        for v in &values[i * n..(i + 1) * n] {
            write!(out, ",{}", fmt_f64(*v))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn read_square<R: Read>(rdr: R, source: &str) -> Result<(Vec<String>, Vec<f64>)> {
    let mut rdr = csv_reader(rdr);
    let header = expect_header(&mut rdr, source, &["id"])?;
    let ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let n = ids.len();
    let mut values = Vec::with_capacity(n * n);
    let mut row = 0;
    for record in rdr.records() {
        let record = record?;
        let line = record_line(&record);
        expect_len(&record, source, n + 1)?;
        if row >= n || record[0] != ids[row] {
            return Err(Error::parse(
                source,
                line,
                format!("row `{}` does not match the header order", &record[0]),
            ));
        }
        for cell in record.iter().skip(1) {
            values.push(parse_f64(source, line, cell)?);
        }
        row += 1;
    }
    if row != n {
        return Err(Error::parse(
            source,
            0,
            format!("expected {n} rows, found {row}"),
        ));
    }
    Ok((ids, values))
}

pub fn read_distance_matrix<R: Read>(rdr: R, source: &str) -> Result<DistanceMatrix> {
    let (ids, values) = read_square(rdr, source)?;
    DistanceMatrix::new(ids, values)
}

pub fn read_correlation_matrix<R: Read>(rdr: R, source: &str) -> Result<CorrelationMatrix> {
    let (ids, values) = read_square(rdr, source)?;
    CorrelationMatrix::new(ids, values)
}

pub fn write_distance_long_header<W: Write + ?Sized>(out: &mut W) -> Result<()> {
    writeln!(out, "date,i,j,w")?;
    Ok(())
}

/// Appends one day of the long format `date,i,j,w` (upper triangle only).
pub fn write_distance_long_rows<W: Write + ?Sized>(
    date: NaiveDate,
    dist: &DistanceMatrix,
    out: &mut W,
) -> Result<()> {
    let n = dist.n();
    for i in 0..n {
        for j in (i + 1)..n {
            writeln!(
                out,
                "{date},{},{},{}",
                dist.companies[i],
                dist.companies[j],
                fmt_f64(dist.get(i, j))
            )?;
        }
    }
    Ok(())
}

/// Reads the long format back, one matrix per date, given the company order.
pub fn read_distance_long<R: Read>(
    rdr: R,
    source: &str,
    companies: &[String],
) -> Result<Vec<(NaiveDate, DistanceMatrix)>> {
    let index: std::collections::HashMap<&str, usize> = companies
        .iter()
        .enumerate()
        .map(|(k, c)| (c.as_str(), k))
        .collect();
    let n = companies.len();
    let mut rdr = csv_reader(rdr);
    expect_header(&mut rdr, source, &["date", "i", "j", "w"])?;
    let mut out: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record_line(&record);
        expect_len(&record, source, 4)?;
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|_| Error::parse(source, line, format!("bad date `{}`", &record[0])))?;
        let lookup = |s: &str| {
            index
                .get(s)
                .copied()
                .ok_or_else(|| Error::parse(source, line, format!("unknown company `{s}`")))
        };
        let (i, j) = (lookup(&record[1])?, lookup(&record[2])?);
        let w = parse_f64(source, line, &record[3])?;
        if out.last().map(|(d, _)| *d) != Some(date) {
            out.push((date, vec![0.0; n * n]));
        }
        let m = &mut out.last_mut().expect("pushed above").1;
        m[i * n + j] = w;
        m[j * n + i] = w;
    }
    out.into_iter()
        .map(|(d, v)| DistanceMatrix::new(companies.to_vec(), v).map(|m| (d, m)))
        .collect()
}
