//! End-to-end batch runs driven by a TOML config.
//!
//! ```toml
//! seed = 7                         # permutation seed
//! output_dir = "out"               # relative to the config file
//! groupings = ["sector", "country"]
//! replicates = 999
//! svg = true
//!
//! dynamic = false
//! lambda = 0.01
//! burn_in = 300                    # default ceil(3 / lambda)
//! dynamic_grouping = "country"
//! write_distances = false
//!
//! [input]                          # or [synth], never both
//! prices = "prices.csv"
//! metadata = "metadata.csv"
//! fx = "fx.csv"                    # optional
//! base_currency = "EUR"            # required with fx
//!
//! [[defactor]]                     # zero or more, applied in order
//! grouping = "sector"
//! index = "median"                 # mean | median
//! fit = "theil_sen"                # ols | theil_sen
//! leave_one_out = false
//!
//! [mds]
//! max_iters = 500
//! tol = 1e-9
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlate::{
    default_burn_in, pearson, to_distance, write_distance_long_header, write_distance_long_rows,
    write_square, DistanceMatrix, EwDistances,
};
use crate::defactor::{residualize, DefactorStage};
use crate::embed::{embed, write_embedding, Embedding, SmacofOptions};
use crate::error::{Error, Result, StageExt};
use crate::evaluate::{
    leaf_labels, purity, purity_report, write_purity_header, write_purity_rows, PurityReport,
    DEFAULT_REPLICATES,
};
use crate::hcluster::{average_link, write_merge_table, Dendrogram};
use crate::io::{fmt_f64, write_file};
use crate::newick::to_newick;
use crate::panel::{
    convert_currency, load_fx, load_prices, reconstruct_prices, to_log_returns, write_metadata,
    write_prices, write_returns, Grouping, ReturnsPanel,
};
use crate::svg;
use crate::synth::{generate, FactorModelSpec};

/// Days clustered per parallel batch in the dynamic run.
const DAY_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub prices: PathBuf,
    pub metadata: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fx: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_currency: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdsConfig {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for MdsConfig {
    fn default() -> Self {
        let d = SmacofOptions::default();
        Self {
            max_iters: d.max_iters,
            tol: d.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub groupings: Vec<Grouping>,
    pub replicates: usize,
    pub svg: bool,
    pub dynamic: bool,
    pub lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    pub dynamic_grouping: Grouping,
    pub write_distances: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<InputConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<FactorModelSpec>,
    pub defactor: Vec<DefactorStage>,
    pub mds: MdsConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            groupings: vec![Grouping::Sector, Grouping::Country],
            replicates: DEFAULT_REPLICATES,
            svg: false,
            dynamic: false,
            lambda: 0.01,
            burn_in: None,
            dynamic_grouping: Grouping::Country,
            write_distances: false,
            input: None,
            synth: None,
            defactor: Vec::new(),
            mds: MdsConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.input, &self.synth) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either [input] or [synth], not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "one of [input] or [synth] is required".into(),
                ))
            }
            (Some(input), None) => {
                if input.fx.is_some() && input.base_currency.is_none() {
                    return Err(Error::Config("fx rates given without base_currency".into()));
                }
            }
            (None, Some(spec)) => spec.validate()?,
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config(format!(
                "lambda must lie in (0, 1), got {}",
                self.lambda
            )));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if !self.dynamic && self.groupings.is_empty() {
            return Err(Error::Config("groupings must not be empty".into()));
        }
        if self.mds.max_iters == 0 || !(self.mds.tol > 0.0) {
            return Err(Error::Config("mds needs max_iters >= 1 and tol > 0".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn effective_burn_in(&self) -> usize {
        self.burn_in.unwrap_or_else(|| default_burn_in(self.lambda))
    }
}

/// Ingested and de-factored panels.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub returns: ReturnsPanel,
    /// Panel after the last de-factor stage (equal to `returns` without stages).
    pub analysed: ReturnsPanel,
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct StaticResult {
    pub prepared: Prepared,
    pub distances: DistanceMatrix,
    pub dendrogram: Dendrogram,
    pub reports: Vec<PurityReport>,
    pub embedding: Embedding,
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicPoint {
    pub date: NaiveDate,
    pub label: String,
    pub purity: f64,
}

#[derive(Debug, Clone)]
pub struct DynamicResult {
    pub prepared: Prepared,
    pub series: Vec<DynamicPoint>,
    pub outputs: Vec<PathBuf>,
}

impl DynamicResult {
    /// Purity values of one label in date order.
    pub fn label_series(&self, label: &str) -> Vec<(NaiveDate, f64)> {
        self.series
            .iter()
            .filter(|p| p.label == label)
            .map(|p| (p.date, p.purity))
            .collect()
    }
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    fn write<F>(&mut self, name: &str, f: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut dyn std::io::Write) -> Result<()>,
    {
        let path = self.dir.join(name);
        write_file(&path, f)?;
        self.written.push(path.clone());
        Ok(path)
    }
}

fn ingest(cfg: &PipelineConfig, out: &mut Outputs) -> Result<(ReturnsPanel, Vec<String>)> {
    let (price_path, meta_path, fx, base) = match (&cfg.input, &cfg.synth) {
        (Some(input), _) => (
            cfg.resolve(&input.prices),
            cfg.resolve(&input.metadata),
            input.fx.as_ref().map(|p| cfg.resolve(p)),
            input.base_currency.clone(),
        ),
        (None, Some(spec)) => {
            let panel = generate(spec).stage("synth")?;
            let prices = reconstruct_prices(&panel, 100.0).stage("synth")?;
            let p = out.write("prices.csv", |w| write_prices(&prices, w))?;
            let m = out.write("metadata.csv", |w| write_metadata(&panel.labels, w))?;
            (p, m, None, None)
        }
        (None, None) => return Err(Error::Config("no input".into())),
    };
    let loaded = load_prices(&price_path, &meta_path)?;
    let dropped: Vec<String> = loaded.dropped.iter().map(|d| d.id.clone()).collect();
    for d in &loaded.dropped {
        warn!("dropping {}: {} missing price(s)", d.id, d.missing_dates);
    }
    let mut prices = loaded.panel;
    match (fx, base) {
        (Some(fx), Some(base)) => {
            let table = load_fx(&fx)?;
            prices = convert_currency(&prices, &table, &base)?;
        }
        (None, Some(base)) => {
            if let Some(i) = (0..prices.n_companies()).find(|&i| prices.currency(i) != base) {
                return Err(Error::Config(format!(
                    "company `{}` quotes in {} but no fx rates were given",
                    prices.companies[i],
                    prices.currency(i)
                )));
            }
        }
        _ => {}
    }
    let returns = to_log_returns(&prices)?;
    info!(
        "ingested {} companies over {} return days",
        returns.n_companies(),
        returns.n_days()
    );
    Ok((returns, dropped))
}

fn prepare(cfg: &PipelineConfig, out: &mut Outputs) -> Result<Prepared> {
    let (returns, dropped) = ingest(cfg, out).stage("ingest")?;
    out.write("returns.csv", |w| write_returns(&returns, &[], w))?;
    let analysed = defactor_all(&returns, &cfg.defactor).stage("defactor")?;
    if !cfg.defactor.is_empty() {
        let comments: Vec<String> = cfg.defactor.iter().map(|s| s.to_string()).collect();
        out.write("residuals.csv", |w| write_returns(&analysed, &comments, w))?;
    }
    Ok(Prepared {
        returns,
        analysed,
        dropped,
    })
}

/// Applies the stages in order.
pub fn defactor_all(panel: &ReturnsPanel, stages: &[DefactorStage]) -> Result<ReturnsPanel> {
    let mut current = panel.clone();
    for stage in stages {
        info!("{stage}");
        current = residualize(&current, stage)?.into_panel();
    }
    Ok(current)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    mode: &'static str,
    companies: usize,
    days: usize,
    burn_in: Option<usize>,
    dropped: &'a [String],
    outputs: Vec<String>,
    config: &'a PipelineConfig,
}

fn write_manifest(
    cfg: &PipelineConfig,
    out: &mut Outputs,
    mode: &'static str,
    prepared: &Prepared,
) -> Result<()> {
    let outputs = out
        .written
        .iter()
        .filter_map(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .collect();
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        mode,
        companies: prepared.analysed.n_companies(),
        days: prepared.analysed.n_days(),
        burn_in: cfg.dynamic.then(|| cfg.effective_burn_in()),
        dropped: &prepared.dropped,
        outputs,
        config: cfg,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    out.write("manifest.toml", |w| {
        w.write_all(text.as_bytes())?;
        Ok(())
    })?;
    Ok(())
}

/// Whole-period correlation, clustering, purity and embedding.
pub fn run_static(cfg: &PipelineConfig) -> Result<StaticResult> {
    cfg.validate()?;
    let mut out = Outputs::new(cfg.output_path()).stage("output")?;
    let prepared = prepare(cfg, &mut out)?;
    let panel = &prepared.analysed;

    let corr = pearson(panel).stage("correlate")?;
    let distances = to_distance(&corr).stage("correlate")?;
    out.write("correlation.csv", |w| {
        write_square(corr.companies(), corr.values(), w)
    })?;
    out.write("distance.csv", |w| {
        write_square(distances.companies(), distances.values(), w)
    })?;

    let dendrogram = average_link(&distances).stage("cluster")?;
    out.write("merges.csv", |w| write_merge_table(&dendrogram, w))?;
    let newick = to_newick(&dendrogram);
    out.write("tree.nwk", |w| {
        writeln!(w, "{newick}")?;
        Ok(())
    })?;

    let mut groupings: Vec<Grouping> = Vec::new();
    for g in &cfg.groupings {
        if !groupings.contains(g) {
            groupings.push(*g);
        }
    }
    let reports = groupings
        .iter()
        .map(|&g| purity_report(&dendrogram, &panel.labels, g, cfg.replicates, cfg.seed))
        .collect::<Result<Vec<_>>>()
        .stage("purity")?;
    out.write("purity.csv", |w| {
        write_purity_header(w)?;
        reports.iter().try_for_each(|r| write_purity_rows(r, w))
    })?;
    out.write("purity.txt", |w| {
        for r in &reports {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })?;

    let opts = SmacofOptions {
        max_iters: cfg.mds.max_iters,
        tol: cfg.mds.tol,
    };
    let embedding = embed(&distances, opts).stage("embed")?;
    out.write("embedding.csv", |w| {
        write_embedding(&embedding, &panel.labels, w)
    })?;
    if cfg.svg {
        for g in [Grouping::Sector, Grouping::Country] {
            let labels = leaf_labels(&dendrogram, &panel.labels, g)?;
            let name = format!("mds_{g}.svg");
            let chart = svg::scatter(
                &format!("MDS embedding by {g}"),
                &embedding.companies,
                &embedding.points,
                &labels,
            );
            out.write(&name, |w| {
                w.write_all(chart.as_bytes())?;
                Ok(())
            })?;
        }
    }

    write_manifest(cfg, &mut out, "static", &prepared)?;
    Ok(StaticResult {
        prepared,
        distances,
        dendrogram,
        reports,
        embedding,
        outputs: out.written,
    })
}

/// Purity of every label with at least two members on one clustered day.
fn day_purities(
    dist: &DistanceMatrix,
    panel: &ReturnsPanel,
    grouping: Grouping,
) -> Result<Vec<(String, f64)>> {
    let d = average_link(dist)?;
    let labels = leaf_labels(&d, &panel.labels, grouping)?;
    let distinct: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
    distinct
        .into_iter()
        .filter(|l| labels.iter().filter(|x| x == l).count() >= 2)
        .map(|l| Ok((l.to_owned(), purity(&d, &labels, l)?)))
        .collect()
}

/// Daily purity from exponentially weighted distances, in date order.
///
/// Matrices are produced sequentially and clustered in parallel batches;
/// `on_batch` sees each batch's matrices before they are dropped.
pub fn purity_series_with<F>(
    panel: &ReturnsPanel,
    lambda: f64,
    burn_in: usize,
    grouping: Grouping,
    mut on_batch: F,
) -> Result<Vec<DynamicPoint>>
where
    F: FnMut(&[(NaiveDate, DistanceMatrix)]) -> Result<()>,
{
    let mut iter = EwDistances::new(panel, lambda, burn_in)?;
    let mut series = Vec::new();
    loop {
        let batch: Vec<(NaiveDate, DistanceMatrix)> =
            iter.by_ref().take(DAY_BATCH).collect::<Result<_>>()?;
        if batch.is_empty() {
            break;
        }
        on_batch(&batch)?;
        let rows: Vec<Vec<(String, f64)>> = batch
            .par_iter()
            .map(|(_, dist)| day_purities(dist, panel, grouping))
            .collect::<Result<_>>()?;
        for ((date, _), day) in batch.iter().zip(rows) {
            series.extend(day.into_iter().map(|(label, purity)| DynamicPoint {
                date: *date,
                label,
                purity,
            }));
        }
    }
    Ok(series)
}

pub fn purity_series(
    panel: &ReturnsPanel,
    lambda: f64,
    burn_in: usize,
    grouping: Grouping,
) -> Result<Vec<DynamicPoint>> {
    purity_series_with(panel, lambda, burn_in, grouping, |_| Ok(()))
}

pub fn write_dynamic_purity<W: std::io::Write + ?Sized>(
    series: &[DynamicPoint],
    out: &mut W,
) -> Result<()> {
    writeln!(out, "date,label,purity")?;
    for p in series {
        writeln!(out, "{},{},{}", p.date, p.label, fmt_f64(p.purity))?;
    }
    Ok(())
}

/// Reads `date,label,purity` rows back.
pub fn read_dynamic_purity<R: std::io::Read>(rdr: R, source: &str) -> Result<Vec<DynamicPoint>> {
    use crate::io::{csv_reader, expect_header, expect_len, parse_f64, record_line};
    let mut rdr = csv_reader(rdr);
    expect_header(&mut rdr, source, &["date", "label", "purity"])?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record_line(&record);
        expect_len(&record, source, 3)?;
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| Error::parse(source, line, format!("bad date `{}`: {e}", &record[0])))?;
        out.push(DynamicPoint {
            date,
            label: record[1].to_owned(),
            purity: parse_f64(source, line, &record[2])?,
        });
    }
    Ok(out)
}

/// Day-by-day clustering purity over the exponentially weighted distances.
pub fn run_dynamic(cfg: &PipelineConfig) -> Result<DynamicResult> {
    cfg.validate()?;
    let mut out = Outputs::new(cfg.output_path()).stage("output")?;
    let prepared = prepare(cfg, &mut out)?;
    let panel = &prepared.analysed;
    let burn_in = cfg.effective_burn_in();
    if burn_in >= panel.n_days() {
        warn!(
            "burn-in of {burn_in} days covers all {} days; the purity series is empty",
            panel.n_days()
        );
    }

    let series = if cfg.write_distances {
        let path = out.dir.join("distances_long.csv");
        let mut w = crate::io::create(&path)?;
        write_distance_long_header(&mut w)?;
        let s = purity_series_with(panel, cfg.lambda, burn_in, cfg.dynamic_grouping, |batch| {
            batch
                .iter()
                .try_for_each(|(date, d)| write_distance_long_rows(*date, d, &mut w))
        })
        .stage("dynamic")?;
        std::io::Write::flush(&mut w)?;
        out.written.push(path);
        s
    } else {
        purity_series(panel, cfg.lambda, burn_in, cfg.dynamic_grouping).stage("dynamic")?
    };
    out.write("dynamic_purity.csv", |w| write_dynamic_purity(&series, w))?;

    if cfg.svg {
        let dates: Vec<String> = {
            let mut seen = Vec::new();
            for p in &series {
                if seen.last() != Some(&p.date) {
                    seen.push(p.date);
                }
            }
            seen.iter().map(|d| d.to_string()).collect()
        };
        let labels: BTreeSet<&str> = series.iter().map(|p| p.label.as_str()).collect();
        let lines: Vec<(String, Vec<f64>)> = labels
            .into_iter()
            .map(|l| {
                (
                    l.to_owned(),
                    series
                        .iter()
                        .filter(|p| p.label == l)
                        .map(|p| p.purity)
                        .collect(),
                )
            })
            .collect();
        let chart = svg::line_chart(
            &format!("Daily {} purity", cfg.dynamic_grouping),
            &lines,
            &dates,
        );
        out.write("dynamic_purity.svg", |w| {
            w.write_all(chart.as_bytes())?;
            Ok(())
        })?;
    }

    write_manifest(cfg, &mut out, "dynamic", &prepared)?;
    Ok(DynamicResult {
        prepared,
        series,
        outputs: out.written,
    })
}

pub enum RunResult {
    Static(Box<StaticResult>),
    Dynamic(Box<DynamicResult>),
}

/// Static or dynamic run depending on the config's `dynamic` flag.
pub fn run(cfg: &PipelineConfig) -> Result<RunResult> {
    if cfg.dynamic {
        run_dynamic(cfg).map(|r| RunResult::Dynamic(Box::new(r)))
    } else {
        run_static(cfg).map(|r| RunResult::Static(Box::new(r)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_synth() -> &'static str {
        r#"
seed = 3
replicates = 19
[synth]
days = 120
sectors = [{ label = "A", count = 4 }, { label = "B", count = 4 }]
countries = [{ label = "X", count = 4 }, { label = "Y", count = 4 }]
"#
    }

    #[test]
    fn exclusivity() {
        let both = format!(
            "{}\n[input]\nprices = \"p.csv\"\nmetadata = \"m.csv\"\n",
            small_synth()
        );
        let err = PipelineConfig::from_toml_str(&both, ".").unwrap_err();
        assert!(err.is_validation());
        assert!(PipelineConfig::from_toml_str("seed = 1", ".").is_err());
        assert!(PipelineConfig::from_toml_str(small_synth(), ".").is_ok());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let extra = format!("colour = 1\n{}", small_synth());
        assert!(PipelineConfig::from_toml_str(&extra, ".").is_err());
        let lambda = format!("lambda = 1.5\n{}", small_synth());
        assert!(PipelineConfig::from_toml_str(&lambda, ".").is_err());
    }

    #[test]
    fn defaults_and_round_trip() {
        let cfg = PipelineConfig::from_toml_str(small_synth(), "/tmp/x").unwrap();
        assert_eq!(cfg.effective_burn_in(), 300);
        assert_eq!(cfg.groupings, vec![Grouping::Sector, Grouping::Country]);
        assert_eq!(cfg.output_path(), PathBuf::from("/tmp/x/out"));
        let text = cfg.to_toml().unwrap();
        let back = PipelineConfig::from_toml_str(&text, "/tmp/x").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn defactor_stages_parse() {
        let text = format!(
            "{}\n[[defactor]]\ngrouping = \"sector\"\n[[defactor]]\ngrouping = \"all\"\nindex = \"mean\"\nfit = \"ols\"\n",
            small_synth()
        );
        let cfg = PipelineConfig::from_toml_str(&text, ".").unwrap();
        assert_eq!(cfg.defactor.len(), 2);
        assert_eq!(cfg.defactor[0].fit, crate::defactor::FitMethod::TheilSen);
        assert_eq!(cfg.defactor[1].grouping, Grouping::All);
    }
}
