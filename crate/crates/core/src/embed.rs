//! Two-dimensional metric MDS.
//!
//! Minimises the raw stress `sum_{i<j} (||x_i - x_j|| - w_ij)^2` by SMACOF
//! (Guttman transform, unit weights) from a classical-scaling start.

use std::io::{Read, Write};

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};

use crate::correlate::DistanceMatrix;
use crate::error::{Error, Result};
use crate::io::{csv_reader, expect_header, expect_len, fmt_f64, parse_f64, record_line};
use crate::panel::CompanyMeta;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub companies: Vec<String>,
    pub points: Vec<Point>,
    pub stress: f64,
    pub iterations: usize,
    /// Stress before the first transform followed by the stress after each.
    pub stress_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmacofOptions {
    pub max_iters: usize,
    /// Stop once the relative stress decrease falls below this.
    pub tol: f64,
}

impl Default for SmacofOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-9,
        }
    }
}

fn euclid(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Raw stress of `points` against `dist`.
pub fn stress(dist: &DistanceMatrix, points: &[Point]) -> f64 {
    let n = dist.n();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let r = euclid(&points[i], &points[j]) - dist.get(i, j);
            s += r * r;
        }
    }
    s
}

/// Classical (Torgerson) scaling: top two eigenpairs of the double-centred
/// squared distances, negative eigenvalues truncated to zero.
pub fn classical_mds_init(dist: &DistanceMatrix) -> Result<Embedding> {
    let n = dist.n();
    if n < 2 {
        return Err(Error::invalid(format!(
            "MDS needs at least 2 items, got {n}"
        )));
    }
    let sq = DMatrix::from_fn(n, n, |i, j| dist.get(i, j).powi(2));
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| {
        -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand)
    });
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let mut points = vec![[0.0; 2]; n];
    for (axis, &k) in order.iter().take(2).enumerate() {
        let scale = eig.eigenvalues[k].max(0.0).sqrt();
        for (i, p) in points.iter_mut().enumerate() {
            p[axis] = eig.eigenvectors[(i, k)] * scale;
        }
    }
    let s = stress(dist, &points);
    Ok(Embedding {
        companies: dist.companies().to_vec(),
        points,
        stress: s,
        iterations: 0,
        stress_trace: vec![s],
    })
}

/// One Guttman transform with unit weights:
/// `x_i <- (1/n) sum_{j != i} (w_ij / d_ij) (x_i - x_j)`, skipping
/// coincident pairs.
fn guttman(dist: &DistanceMatrix, points: &[Point]) -> Vec<Point> {
    let n = points.len();
    let inv_n = 1.0 / n as f64;
    let mut next = vec![[0.0; 2]; n];
    for i in 0..n {
        let mut acc = [0.0; 2];
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = euclid(&points[i], &points[j]);
            if d > 0.0 {
                let ratio = dist.get(i, j) / d;
                acc[0] += ratio * (points[i][0] - points[j][0]);
                acc[1] += ratio * (points[i][1] - points[j][1]);
            }
        }
        next[i] = [acc[0] * inv_n, acc[1] * inv_n];
    }
    next
}

/// Stress majorization from `init`.
pub fn smacof(dist: &DistanceMatrix, init: &Embedding, opts: SmacofOptions) -> Result<Embedding> {
    let n = dist.n();
    if init.points.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: init.points.len(),
        });
    }
    if opts.max_iters == 0 || !(opts.tol > 0.0) {
        return Err(Error::invalid("smacof needs max_iters >= 1 and tol > 0"));
    }
    if init.points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid(
            "initial configuration has non-finite coordinates",
        ));
    }
    // Below this the fit is exact up to rounding (relative RMS distance
    // error around 1e-13) and further transforms only shuffle noise.
    let target_sq: f64 = dist.values().iter().map(|w| w * w).sum::<f64>() / 2.0;
    let floor = (1e3 * f64::EPSILON).powi(2) * target_sq;
    let mut points = init.points.clone();
    let mut current = stress(dist, &points);
    let mut trace = vec![current];
    let mut iterations = 0;
    while iterations < opts.max_iters && current > floor {
        let next = guttman(dist, &points);
        let s = stress(dist, &next);
        iterations += 1;
        debug_assert!(
            s <= current * (1.0 + 1e-10) + 1e-14,
            "stress increased from {current} to {s}"
        );
        trace.push(s);
        let rel = (current - s) / current;
        points = next;
        current = s;
        if rel < opts.tol {
            break;
        }
    }
    Ok(Embedding {
        companies: dist.companies().to_vec(),
        points,
        stress: current,
        iterations,
        stress_trace: trace,
    })
}

/// Classical start followed by SMACOF.
pub fn embed(dist: &DistanceMatrix, opts: SmacofOptions) -> Result<Embedding> {
    let init = classical_mds_init(dist)?;
    smacof(dist, &init, opts)
}

fn centered(points: &[Point]) -> Vec<Point> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    points.iter().map(|p| [p[0] - cx, p[1] - cy]).collect()
}

/// Root-mean-square point distance after the best similarity transform
/// (translation, rotation, reflection, uniform scale) of `b` onto `a`.
pub fn procrustes_residual(a: &[Point], b: &[Point]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let (ca, cb) = (centered(a), centered(b));
    // Cross-covariance H = B^T A.
    let mut h = Matrix2::<f64>::zeros();
    for (p, q) in cb.iter().zip(&ca) {
        for r in 0..2 {
            for c in 0..2 {
                h[(r, c)] += p[r] * q[c];
            }
        }
    }
    let norm_b: f64 = cb.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum();
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let rot: Matrix2<f64> = u * v_t;
    let scale = if norm_b > 0.0 {
        svd.singular_values.sum() / norm_b
    } else {
        0.0
    };
    let sq: f64 = cb
        .iter()
        .zip(&ca)
        .map(|(p, q)| {
            let x = scale * (p[0] * rot[(0, 0)] + p[1] * rot[(1, 0)]);
            let y = scale * (p[0] * rot[(0, 1)] + p[1] * rot[(1, 1)]);
            (q[0] - x).powi(2) + (q[1] - y).powi(2)
        })
        .sum();
    Ok((sq / a.len() as f64).sqrt())
}

/// `id,x,y,label_sector,label_country`.
pub fn write_embedding<W: Write + ?Sized>(
    emb: &Embedding,
    meta: &[CompanyMeta],
    out: &mut W,
) -> Result<()> {
    let by_id: std::collections::HashMap<&str, &CompanyMeta> =
        meta.iter().map(|m| (m.id.as_str(), m)).collect();
    writeln!(out, "id,x,y,label_sector,label_country")?;
    for (id, p) in emb.companies.iter().zip(&emb.points) {
        let m = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::MissingMetadata(id.clone()))?;
        writeln!(
            out,
            "{id},{},{},{},{}",
            fmt_f64(p[0]),
            fmt_f64(p[1]),
            m.sector,
            m.country
        )?;
    }
    Ok(())
}

/// Reads `(id, point, sector, country)` rows back.
pub fn read_embedding<R: Read>(
    rdr: R,
    source: &str,
) -> Result<Vec<(String, Point, String, String)>> {
    let mut rdr = csv_reader(rdr);
    expect_header(
        &mut rdr,
        source,
        &["id", "x", "y", "label_sector", "label_country"],
    )?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record_line(&record);
        expect_len(&record, source, 5)?;
        out.push((
            record[0].to_owned(),
            [
                parse_f64(source, line, &record[1])?,
                parse_f64(source, line, &record[2])?,
            ],
            record[3].to_owned(),
            record[4].to_owned(),
        ));
    }
    Ok(out)
}
