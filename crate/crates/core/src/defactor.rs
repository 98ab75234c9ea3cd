//! Pseudo-index construction and single-factor removal.
//!
//! Each company's returns are regressed on a pseudo-index built from its
//! group (per-day mean or median of member returns) and replaced by the
//! regression residuals. Stages never chain implicitly; callers apply them
//! one after another.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Grouping, ReturnsPanel};
use crate::stats::median_in_place;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexMethod {
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Ols,
    TheilSen,
}

impl fmt::Display for IndexMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndexMethod::Mean => "mean",
            IndexMethod::Median => "median",
        })
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitMethod::Ols => "ols",
            FitMethod::TheilSen => "theil_sen",
        })
    }
}

impl std::str::FromStr for IndexMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(IndexMethod::Mean),
            "median" => Ok(IndexMethod::Median),
            other => Err(Error::invalid(format!("unknown index method `{other}`"))),
        }
    }
}

impl std::str::FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" => Ok(FitMethod::Ols),
            "theil_sen" | "theil-sen" => Ok(FitMethod::TheilSen),
            other => Err(Error::invalid(format!("unknown fit method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoIndex {
    pub group: String,
    pub method: IndexMethod,
    pub values: Vec<f64>,
}

/// Per-day mean or median of the `members`' returns.
pub fn pseudo_index(
    panel: &ReturnsPanel,
    group: &str,
    members: &[usize],
    method: IndexMethod,
) -> Result<PseudoIndex> {
    if members.is_empty() {
        return Err(Error::invalid(format!(
            "pseudo-index for group `{group}` has no members"
        )));
    }
    if let Some(&bad) = members.iter().find(|&&i| i >= panel.n_companies()) {
        return Err(Error::invalid(format!("member index {bad} out of range")));
    }
    let mut day = vec![0.0; members.len()];
    let values = (0..panel.n_days())
        .map(|t| {
            for (slot, &i) in day.iter_mut().zip(members) {
                *slot = panel.returns[i][t];
            }
            match method {
                IndexMethod::Mean => day.iter().sum::<f64>() / day.len() as f64,
                IndexMethod::Median => median_in_place(&mut day).expect("nonempty"),
            }
        })
        .collect();
    Ok(PseudoIndex {
        group: group.to_owned(),
        method,
        values,
    })
}

/// Intercept and slope of `y = alpha + beta * x + e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionFit {
    pub alpha: f64,
    pub beta: f64,
    pub method: FitMethod,
}

impl RegressionFit {
    pub fn residual(&self, x: f64, y: f64) -> f64 {
        y - self.alpha - self.beta * x
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::invalid(format!(
            "regression needs at least 2 points, got {}",
            x.len()
        )));
    }
    Ok(())
}

/// Ordinary least squares.
pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<RegressionFit> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        sxx += dx * dx;
        sxy += dx * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::ConstantRegressor);
    }
    let beta = sxy / sxx;
    Ok(RegressionFit {
        alpha: my - beta * mx,
        beta,
        method: FitMethod::Ols,
    })
}

/// Theil-Sen: the slope is the median of `(y_m - y_n) / (x_m - x_n)` over all
/// unordered pairs with `x_m != x_n`, the intercept the median of
/// `y_t - slope * x_t`. Even-count medians are midpoints.
///
/// Enumerates all `T (T - 1) / 2` pairs.
pub fn theil_sen_fit(x: &[f64], y: &[f64]) -> Result<RegressionFit> {
    check_pair(x, y)?;
    let len = x.len();
    let mut slopes = Vec::with_capacity(len * (len - 1) / 2);
    for m in 0..len {
        let (xm, ym) = (x[m], y[m]);
        for n in (m + 1)..len {
            let dx = x[n] - xm;
            if dx != 0.0 {
                slopes.push((y[n] - ym) / dx);
            }
        }
    }
    let beta = median_in_place(&mut slopes).ok_or(Error::ConstantRegressor)?;
    drop(slopes);
    let mut offsets: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - beta * a).collect();
    let alpha = median_in_place(&mut offsets).expect("len >= 2");
    Ok(RegressionFit {
        alpha,
        beta,
        method: FitMethod::TheilSen,
    })
}

pub fn fit(method: FitMethod, x: &[f64], y: &[f64]) -> Result<RegressionFit> {
    match method {
        FitMethod::Ols => ols_fit(x, y),
        FitMethod::TheilSen => theil_sen_fit(x, y),
    }
}

/// One factor-removal pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefactorStage {
    pub grouping: Grouping,
    #[serde(default = "default_index")]
    pub index: IndexMethod,
    #[serde(default = "default_fit")]
    pub fit: FitMethod,
    /// Exclude each company from its own group index.
    #[serde(default)]
    pub leave_one_out: bool,
}

fn default_index() -> IndexMethod {
    IndexMethod::Median
}

fn default_fit() -> FitMethod {
    FitMethod::TheilSen
}

impl DefactorStage {
    pub fn new(grouping: Grouping, index: IndexMethod, fit: FitMethod) -> Self {
        Self {
            grouping,
            index,
            fit,
            leave_one_out: false,
        }
    }

    pub fn leave_one_out(mut self, on: bool) -> Self {
        self.leave_one_out = on;
        self
    }
}

impl fmt::Display for DefactorStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "residuals grouping={} index={} fit={} leave_one_out={}",
            self.grouping, self.index, self.fit, self.leave_one_out
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPanel {
    pub panel: ReturnsPanel,
    pub stage: DefactorStage,
    /// Fit per company, in panel order.
    pub fits: Vec<RegressionFit>,
}

impl ResidualPanel {
    pub fn into_panel(self) -> ReturnsPanel {
        self.panel
    }
}

fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// Replaces each company's returns by its residuals against its group's
/// pseudo-index (the market index when grouping is `All`).
pub fn residualize(panel: &ReturnsPanel, stage: &DefactorStage) -> Result<ResidualPanel> {
    let n = panel.n_companies();
    let groups = panel.groups(stage.grouping);

    // Index used for each company.
    let mut company_index: Vec<Option<usize>> = vec![None; n];
    let mut indices: Vec<Vec<f64>> = Vec::new();
    let mut bad_groups = Vec::new();
    for (label, members) in &groups {
        if stage.leave_one_out {
            let mut group_ok = true;
            for &i in members {
                let others: Vec<usize> = members.iter().copied().filter(|&k| k != i).collect();
                if others.is_empty() {
                    group_ok = false;
                    break;
                }
                let idx = pseudo_index(panel, label, &others, stage.index)?;
                if is_constant(&idx.values) {
                    group_ok = false;
                    break;
                }
                company_index[i] = Some(indices.len());
                indices.push(idx.values);
            }
            if !group_ok {
                bad_groups.push(label.clone());
            }
        } else {
            let idx = pseudo_index(panel, label, members, stage.index)?;
            if is_constant(&idx.values) {
                bad_groups.push(label.clone());
                continue;
            }
            for &i in members {
                company_index[i] = Some(indices.len());
            }
            indices.push(idx.values);
        }
    }
    if !bad_groups.is_empty() {
        return Err(Error::ConstantIndex(bad_groups));
    }

    let fitted: Vec<(RegressionFit, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = &indices[company_index[i].expect("every company has a group")];
            let y = &panel.returns[i];
            let f = fit(stage.fit, x, y)?;
            let resid = x.iter().zip(y).map(|(a, b)| f.residual(*a, *b)).collect();
            Ok((f, resid))
        })
        .collect::<Result<_>>()?;
    let (fits, residuals): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    Ok(ResidualPanel {
        panel: panel.with_returns(residuals)?,
        stage: *stage,
        fits,
    })
}
