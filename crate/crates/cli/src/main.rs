use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use factorclust::correlate::{
    default_burn_in, pearson, read_distance_matrix, to_distance, write_distance_long_header,
    write_distance_long_rows, write_square,
};
use factorclust::defactor::residualize;
use factorclust::embed::{embed, write_embedding, SmacofOptions};
use factorclust::evaluate::{
    purity_report, write_purity_header, write_purity_rows, DEFAULT_REPLICATES,
};
use factorclust::hcluster::{average_link, read_merge_table, write_merge_table, Dendrogram};
use factorclust::io::{create, open, source_name, write_file};
use factorclust::newick::{parse_newick, to_newick};
use factorclust::panel::{
    convert_currency, load_fx, load_metadata, load_prices, load_returns, reconstruct_prices,
    to_log_returns, write_metadata, write_prices, write_returns,
};
use factorclust::pipeline::{purity_series_with, run, write_dynamic_purity, RunResult};
use factorclust::synth::{generate, FactorModelSpec};
use factorclust::{DefactorStage, Error, FitMethod, Grouping, IndexMethod, PipelineConfig, Result};
use log::{info, warn};

#[derive(Parser)]
#[command(
    name = "factorclust",
    version,
    about = "Cluster equity returns and score sector/country purity"
)]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read prices and metadata, write log returns.
    Ingest(IngestArgs),
    /// Residualize returns against group pseudo-indices.
    Defactor(DefactorArgs),
    /// Correlation, distances and average-link clustering.
    Cluster(ClusterArgs),
    /// Purity table with permutation p-values for a clustered tree.
    Purity(PurityArgs),
    /// Two-dimensional embedding of a distance matrix.
    Mds(MdsArgs),
    /// Daily purity from exponentially weighted correlations.
    Dynamic(DynamicArgs),
    /// Generate a synthetic price panel.
    Synth(SynthArgs),
    /// Full pipeline from a config file.
    Run(RunArgs),
}

#[derive(Args)]
struct PanelInput {
    /// Returns table (`date,<id>...`).
    #[arg(long)]
    returns: PathBuf,
    /// Metadata table (`id,sector,country,currency`).
    #[arg(long)]
    metadata: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    prices: PathBuf,
    #[arg(long)]
    metadata: PathBuf,
    /// Exchange rates (`date,currency,rate`), units of base per unit of currency.
    #[arg(long, requires = "base_currency")]
    fx: Option<PathBuf>,
    #[arg(long)]
    base_currency: Option<String>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct DefactorArgs {
    #[command(flatten)]
    input: PanelInput,
    #[arg(long)]
    grouping: Grouping,
    #[arg(long, default_value = "median")]
    index: IndexMethod,
    #[arg(long, default_value = "theil_sen")]
    fit: FitMethod,
    #[arg(long)]
    leave_one_out: bool,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    input: PanelInput,
    /// Directory for correlation.csv, distance.csv, merges.csv and tree.nwk.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PurityArgs {
    /// Newick tree as written by `cluster`.
    #[arg(long, conflicts_with = "merges", required_unless_present = "merges")]
    tree: Option<PathBuf>,
    /// Merge table; leaf names are taken from `--distance`.
    #[arg(long, requires = "distance")]
    merges: Option<PathBuf>,
    #[arg(long)]
    distance: Option<PathBuf>,
    #[arg(long)]
    metadata: PathBuf,
    /// Grouping(s) to score; defaults to sector and country.
    #[arg(long)]
    grouping: Vec<Grouping>,
    #[arg(short = 'B', long, default_value_t = DEFAULT_REPLICATES)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the table as CSV.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MdsArgs {
    /// Square distance table.
    #[arg(long)]
    distance: PathBuf,
    #[arg(long)]
    metadata: PathBuf,
    #[arg(long, default_value_t = SmacofOptions::default().max_iters)]
    max_iters: usize,
    #[arg(long, default_value_t = SmacofOptions::default().tol)]
    tol: f64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct DynamicArgs {
    #[command(flatten)]
    input: PanelInput,
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    /// Days skipped before emitting; defaults to ceil(3 / lambda).
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long, default_value = "country")]
    grouping: Grouping,
    /// Also write every emitted distance matrix in long form.
    #[arg(long)]
    distances_out: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML file with the factor model; built-in defaults otherwise.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    days: Option<usize>,
    /// Directory for prices.csv and metadata.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides `output_dir` (taken relative to the working directory).
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Forces the dynamic run.
    #[arg(long)]
    dynamic: bool,
}

fn ingest(a: IngestArgs) -> Result<()> {
    let loaded = load_prices(&a.prices, &a.metadata)?;
    for d in &loaded.dropped {
        warn!("dropping {}: {} missing price(s)", d.id, d.missing_dates);
    }
    let mut prices = loaded.panel;
    if let (Some(fx), Some(base)) = (&a.fx, &a.base_currency) {
        prices = convert_currency(&prices, &load_fx(fx)?, base)?;
    }
    let returns = to_log_returns(&prices)?;
    write_file(&a.out, |w| write_returns(&returns, &[], w))?;
    println!(
        "{} companies, {} return days, {} dropped",
        returns.n_companies(),
        returns.n_days(),
        loaded.dropped.len()
    );
    Ok(())
}

fn defactor(a: DefactorArgs) -> Result<()> {
    let panel = load_returns(&a.input.returns, &a.input.metadata)?;
    let stage = DefactorStage::new(a.grouping, a.index, a.fit).leave_one_out(a.leave_one_out);
    let res = residualize(&panel, &stage)?;
    let mut comments = leading_comments(&a.input.returns)?;
    comments.push(stage.to_string());
    write_file(&a.out, |w| write_returns(&res.panel, &comments, w))
}

/// `# ` lines at the top of a table, without the marker.
fn leading_comments(path: &Path) -> Result<Vec<String>> {
    use std::io::BufRead;
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        match line.strip_prefix('#') {
            Some(c) => out.push(c.trim().to_owned()),
            None => break,
        }
    }
    Ok(out)
}

fn cluster(a: ClusterArgs) -> Result<()> {
    let panel = load_returns(&a.input.returns, &a.input.metadata)?;
    let corr = pearson(&panel)?;
    let dist = to_distance(&corr)?;
    let d = average_link(&dist)?;
    std::fs::create_dir_all(&a.out_dir)?;
    write_file(&a.out_dir.join("correlation.csv"), |w| {
        write_square(corr.companies(), corr.values(), w)
    })?;
    write_file(&a.out_dir.join("distance.csv"), |w| {
        write_square(dist.companies(), dist.values(), w)
    })?;
    write_file(&a.out_dir.join("merges.csv"), |w| write_merge_table(&d, w))?;
    let newick = to_newick(&d);
    write_file(&a.out_dir.join("tree.nwk"), |w| {
        writeln!(w, "{newick}")?;
        Ok(())
    })?;
    println!("clustered {} companies", d.n_leaves());
    Ok(())
}

fn load_tree(a: &PurityArgs) -> Result<Dendrogram> {
    if let Some(tree) = &a.tree {
        return parse_newick(&std::fs::read_to_string(tree)?);
    }
    let (merges, dist) = (a.merges.as_ref(), a.distance.as_ref());
    let (Some(merges), Some(dist)) = (merges, dist) else {
        return Err(Error::Config(
            "give --tree, or --merges with --distance".into(),
        ));
    };
    let leaves = read_distance_matrix(open(dist)?, &source_name(dist))?
        .companies()
        .to_vec();
    read_merge_table(open(merges)?, &source_name(merges), leaves)
}

fn purity(a: PurityArgs) -> Result<()> {
    let d = load_tree(&a)?;
    let meta = load_metadata(&a.metadata)?;
    let groupings = if a.grouping.is_empty() {
        vec![Grouping::Sector, Grouping::Country]
    } else {
        a.grouping.clone()
    };
    let reports = groupings
        .iter()
        .map(|&g| purity_report(&d, &meta, g, a.replicates, a.seed))
        .collect::<Result<Vec<_>>>()?;
    for r in &reports {
        println!("{r}");
    }
    if let Some(out) = &a.out {
        write_file(out, |w| {
            write_purity_header(w)?;
            reports.iter().try_for_each(|r| write_purity_rows(r, w))
        })?;
    }
    Ok(())
}

fn mds(a: MdsArgs) -> Result<()> {
    let dist = read_distance_matrix(open(&a.distance)?, &source_name(&a.distance))?;
    let meta = load_metadata(&a.metadata)?;
    let opts = SmacofOptions {
        max_iters: a.max_iters,
        tol: a.tol,
    };
    let e = embed(&dist, opts)?;
    write_file(&a.out, |w| write_embedding(&e, &meta, w))?;
    println!("stress {:.6e} after {} iterations", e.stress, e.iterations);
    Ok(())
}

fn dynamic(a: DynamicArgs) -> Result<()> {
    let panel = load_returns(&a.input.returns, &a.input.metadata)?;
    let burn_in = a.burn_in.unwrap_or_else(|| default_burn_in(a.lambda));
    if burn_in >= panel.n_days() {
        warn!(
            "burn-in of {burn_in} days covers all {} days; the purity series is empty",
            panel.n_days()
        );
    }
    let mut long = match &a.distances_out {
        Some(p) => {
            let mut w = create(p)?;
            write_distance_long_header(&mut w)?;
            Some(w)
        }
        None => None,
    };
    let series = purity_series_with(&panel, a.lambda, burn_in, a.grouping, |batch| {
        if let Some(w) = long.as_mut() {
            for (date, d) in batch {
                write_distance_long_rows(*date, d, w)?;
            }
        }
        Ok(())
    })?;
    if let Some(mut w) = long {
        w.flush()?;
    }
    write_file(&a.out, |w| write_dynamic_purity(&series, w))?;
    println!("{} purity rows", series.len());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut spec: FactorModelSpec = match &a.spec {
        Some(p) => FactorModelSpec::from_toml_str(&std::fs::read_to_string(p)?)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => FactorModelSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(t) = a.days {
        spec.days = t;
    }
    let panel = generate(&spec)?;
    let prices = reconstruct_prices(&panel, 100.0)?;
    std::fs::create_dir_all(&a.out_dir)?;
    write_file(&a.out_dir.join("prices.csv"), |w| write_prices(&prices, w))?;
    write_file(&a.out_dir.join("metadata.csv"), |w| {
        write_metadata(&panel.labels, w)
    })?;
    println!(
        "{} companies over {} days",
        panel.n_companies(),
        prices.n_dates()
    );
    Ok(())
}

fn run_pipeline(a: RunArgs) -> Result<()> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(dir) = a.output_dir {
        cfg.output_dir = std::env::current_dir()?.join(dir);
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(b) = a.replicates {
        cfg.replicates = b;
    }
    cfg.dynamic |= a.dynamic;
    cfg.validate()?;
    match run(&cfg)? {
        RunResult::Static(r) => {
            for report in &r.reports {
                println!("{report}");
            }
            info!(
                "wrote {} files to {}",
                r.outputs.len(),
                cfg.output_path().display()
            );
        }
        RunResult::Dynamic(r) => {
            println!(
                "{} purity rows written to {}",
                r.series.len(),
                cfg.output_path().display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Defactor(a) => defactor(a),
        Command::Cluster(a) => cluster(a),
        Command::Purity(a) => purity(a),
        Command::Mds(a) => mds(a),
        Command::Dynamic(a) => dynamic(a),
        Command::Synth(a) => synth(a),
        Command::Run(a) => run_pipeline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
