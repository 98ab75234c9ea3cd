use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use factorclust::correlate::{pearson, to_distance};
use factorclust::defactor::{ols_fit, residualize, theil_sen_fit};
use factorclust::embed::{embed, SmacofOptions};
use factorclust::evaluate::{leaf_labels, permutation_p_value, purity};
use factorclust::hcluster::{average_link, smallest_common_cluster_by_name};
use factorclust::newick::{parse_newick, to_newick};
use factorclust::panel::load_returns;
use factorclust::pipeline::{purity_series, run, RunResult};
use factorclust::synth::{expected_correlation, generate};
use factorclust::{
    DefactorStage, Error, FactorModelSpec, FitMethod, Grouping, IndexMethod, PipelineConfig,
};

fn py_err(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

/// Daily log returns with sector and country labels.
#[pyclass(module = "factorclust_py", frozen)]
struct ReturnsPanel(factorclust::ReturnsPanel);

#[pymethods]
impl ReturnsPanel {
    /// Reads a returns table and its metadata.
    #[staticmethod]
    fn load(returns: PathBuf, metadata: PathBuf) -> PyResult<Self> {
        load_returns(&returns, &metadata).map(Self).map_err(py_err)
    }

    /// Synthetic panel from a TOML factor-model spec (defaults if empty).
    #[staticmethod]
    #[pyo3(signature = (spec_toml = "", seed = None))]
    fn synth(spec_toml: &str, seed: Option<u64>) -> PyResult<Self> {
        let mut spec = FactorModelSpec::from_toml_str(spec_toml).map_err(py_err)?;
        if let Some(s) = seed {
            spec.seed = s;
        }
        generate(&spec).map(Self).map_err(py_err)
    }

    #[getter]
    fn companies(&self) -> Vec<String> {
        self.0.companies.clone()
    }

    #[getter]
    fn dates(&self) -> Vec<String> {
        self.0.dates.iter().map(|d| d.to_string()).collect()
    }

    #[getter]
    fn returns(&self) -> Vec<Vec<f64>> {
        self.0.returns.clone()
    }

    #[getter]
    fn sectors(&self) -> Vec<String> {
        self.0.labels.iter().map(|m| m.sector.clone()).collect()
    }

    #[getter]
    fn countries(&self) -> Vec<String> {
        self.0.labels.iter().map(|m| m.country.clone()).collect()
    }

    fn __len__(&self) -> usize {
        self.0.n_companies()
    }

    fn __repr__(&self) -> String {
        format!(
            "ReturnsPanel({} companies x {} days)",
            self.0.n_companies(),
            self.0.n_days()
        )
    }

    /// Residuals against each company's group pseudo-index.
    #[pyo3(signature = (grouping, index = "median", fit = "theil_sen", leave_one_out = false))]
    fn defactor(
        &self,
        grouping: &str,
        index: &str,
        fit: &str,
        leave_one_out: bool,
    ) -> PyResult<Self> {
        let stage = DefactorStage::new(
            parse::<Grouping>(grouping)?,
            parse::<IndexMethod>(index)?,
            parse::<FitMethod>(fit)?,
        )
        .leave_one_out(leave_one_out);
        residualize(&self.0, &stage)
            .map(|r| Self(r.into_panel()))
            .map_err(py_err)
    }

    /// Whole-period correlation distances.
    fn distance_matrix(&self) -> PyResult<DistanceMatrix> {
        let corr = pearson(&self.0).map_err(py_err)?;
        to_distance(&corr).map(DistanceMatrix).map_err(py_err)
    }

    /// Labels of this panel's companies under `grouping`, in panel order.
    fn labels(&self, grouping: &str) -> PyResult<Vec<String>> {
        let g = parse::<Grouping>(grouping)?;
        Ok(self
            .0
            .labels
            .iter()
            .map(|m| m.label(g).to_owned())
            .collect())
    }

    /// `(date, label, purity)` rows from exponentially weighted distances.
    #[pyo3(signature = (lam = 0.01, burn_in = None, grouping = "country"))]
    fn dynamic_purity(
        &self,
        py: Python<'_>,
        lam: f64,
        burn_in: Option<usize>,
        grouping: &str,
    ) -> PyResult<Vec<(String, String, f64)>> {
        let g = parse::<Grouping>(grouping)?;
        let burn_in = burn_in.unwrap_or_else(|| factorclust::correlate::default_burn_in(lam));
        let series = py
            .detach(|| purity_series(&self.0, lam, burn_in, g))
            .map_err(py_err)?;
        Ok(series
            .into_iter()
            .map(|p| (p.date.to_string(), p.label, p.purity))
            .collect())
    }
}

/// Symmetric distance matrix with company ids.
#[pyclass(module = "factorclust_py", frozen)]
struct DistanceMatrix(factorclust::DistanceMatrix);

#[pymethods]
impl DistanceMatrix {
    #[new]
    fn new(companies: Vec<String>, rows: Vec<Vec<f64>>) -> PyResult<Self> {
        factorclust::DistanceMatrix::from_rows(companies, &rows)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn companies(&self) -> Vec<String> {
        self.0.companies().to_vec()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.0
            .values()
            .chunks(self.0.n())
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Average-link dendrogram.
    fn cluster(&self) -> PyResult<Dendrogram> {
        average_link(&self.0).map(Dendrogram).map_err(py_err)
    }

    /// Two-dimensional SMACOF embedding: `(points, stress, iterations)`.
    #[pyo3(signature = (max_iters = 500, tol = 1e-9))]
    fn embed(&self, max_iters: usize, tol: f64) -> PyResult<(Vec<(f64, f64)>, f64, usize)> {
        let e = embed(&self.0, SmacofOptions { max_iters, tol }).map_err(py_err)?;
        let points = e.points.iter().map(|p| (p[0], p[1])).collect();
        Ok((points, e.stress, e.iterations))
    }
}

/// Binary merge tree.
#[pyclass(module = "factorclust_py", frozen)]
struct Dendrogram(factorclust::Dendrogram);

#[pymethods]
impl Dendrogram {
    #[staticmethod]
    fn from_newick(text: &str) -> PyResult<Self> {
        parse_newick(text).map(Self).map_err(py_err)
    }

    #[getter]
    fn leaves(&self) -> Vec<String> {
        self.0.leaves().to_vec()
    }

    /// `(left, right, height, size)` per merge; leaves are `0..n`, the
    /// cluster formed at step `k` is `n + k`.
    #[getter]
    fn merges(&self) -> Vec<(usize, usize, f64, usize)> {
        self.0
            .merges()
            .iter()
            .map(|m| (m.left, m.right, m.height, m.size))
            .collect()
    }

    fn newick(&self) -> String {
        to_newick(&self.0)
    }

    fn smallest_common_cluster(&self, a: &str, b: &str) -> PyResult<Vec<String>> {
        smallest_common_cluster_by_name(&self.0, a, b).map_err(py_err)
    }

    /// Purity of `group` where `labels[k]` labels leaf `k`.
    fn purity(&self, labels: Vec<String>, group: &str) -> PyResult<f64> {
        purity(&self.0, &labels, group).map_err(py_err)
    }

    /// `(purity, p_value)` from `replicates` random same-size leaf subsets.
    #[pyo3(signature = (labels, group, replicates = 999, seed = 0))]
    fn permutation_test(
        &self,
        py: Python<'_>,
        labels: Vec<String>,
        group: &str,
        replicates: usize,
        seed: u64,
    ) -> PyResult<(f64, f64)> {
        let res = py
            .detach(|| permutation_p_value(&self.0, &labels, group, replicates, seed))
            .map_err(py_err)?;
        Ok((res.observed, res.p_value))
    }

    /// Leaf labels looked up from a panel's metadata.
    fn leaf_labels(&self, panel: &ReturnsPanel, grouping: &str) -> PyResult<Vec<String>> {
        leaf_labels(&self.0, &panel.0.labels, parse::<Grouping>(grouping)?).map_err(py_err)
    }
}

/// Theil-Sen `(alpha, beta)`.
#[pyfunction]
fn theil_sen(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64)> {
    theil_sen_fit(&x, &y)
        .map(|f| (f.alpha, f.beta))
        .map_err(py_err)
}

/// Least-squares `(alpha, beta)`.
#[pyfunction]
fn ols(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64)> {
    ols_fit(&x, &y).map(|f| (f.alpha, f.beta)).map_err(py_err)
}

/// Population correlation of two companies under a factor-model spec.
#[pyfunction]
#[pyo3(signature = (spec_toml, same_sector, same_country, post_regime = false))]
fn model_correlation(
    spec_toml: &str,
    same_sector: bool,
    same_country: bool,
    post_regime: bool,
) -> PyResult<f64> {
    let spec = FactorModelSpec::from_toml_str(spec_toml).map_err(py_err)?;
    Ok(expected_correlation(
        &spec,
        same_sector,
        same_country,
        post_regime,
    ))
}

/// Runs a pipeline config file; returns the paths written.
#[pyfunction]
fn run_config(py: Python<'_>, path: PathBuf) -> PyResult<Vec<PathBuf>> {
    let cfg = PipelineConfig::load(&path).map_err(py_err)?;
    let result = py.detach(|| run(&cfg)).map_err(py_err)?;
    Ok(match result {
        RunResult::Static(r) => r.outputs,
        RunResult::Dynamic(r) => r.outputs,
    })
}

#[pymodule]
fn factorclust_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ReturnsPanel>()?;
    m.add_class::<DistanceMatrix>()?;
    m.add_class::<Dendrogram>()?;
    m.add_function(wrap_pyfunction!(theil_sen, m)?)?;
    m.add_function(wrap_pyfunction!(ols, m)?)?;
    m.add_function(wrap_pyfunction!(model_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
