use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clustergraph::clustering::{cluster_data, default_threshold, sample_covariance, DEFAULT_ALPHA0};
use clustergraph::fdr::{select, FdrMethod};
use clustergraph::graph::Topology;
use clustergraph::harness::{
    cross_validate_with, default_grid, export_graph, ingest_csv, read_partition, run_experiment, write_aggregate_csv,
    write_partition, write_summary_json, CvOptions, CvScope, ExperimentConfig, GraphFormat, LambdaPrimeMode,
    TuningMode,
};
use clustergraph::inference::{default_lambda, infer_with_penalties, moment_matrix, Penalties};
use clustergraph::{Error, Execution, GraphKind, Partition, SampleMatrix};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Parser)]
#[command(name = "clustergraph", version, about = "Cluster-based graphical models with FDR control")]
struct Cli {
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the synthetic experiment and write aggregate tables.
    Simulate(SimulateArgs),
    /// Cluster a CSV data set, infer both graphs and select edges.
    Infer(InferArgs),
    /// Cluster the variables of a CSV data set.
    Cluster(ClusterArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    By,
    Bh,
}

impl From<MethodArg> for FdrMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::By => FdrMethod::BenjaminiYekutieli,
            MethodArg::Bh => FdrMethod::BenjaminiHochberg,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphArg {
    Latent,
    Average,
    Both,
}

impl GraphArg {
    fn kinds(self) -> Vec<GraphKind> {
        match self {
            GraphArg::Latent => vec![GraphKind::Latent],
            GraphArg::Average => vec![GraphKind::Average],
            GraphArg::Both => vec![GraphKind::Latent, GraphKind::Average],
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    EdgeList,
    Dot,
}

impl From<FormatArg> for GraphFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::EdgeList => GraphFormat::EdgeList,
            FormatArg::Dot => GraphFormat::Dot,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TuningArg {
    Fixed,
    Cv,
}

/// Selection and tuning flags shared by `simulate` and `infer`.
#[derive(Args)]
struct SelectionArgs {
    /// FDR levels, comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// FDR procedures, comma separated or repeated.
    #[arg(long, value_enum, value_delimiter = ',')]
    method: Vec<MethodArg>,
    #[arg(long, value_enum)]
    graph: Option<GraphArg>,
    #[arg(long, value_enum)]
    tuning: Option<TuningArg>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_prime: Option<f64>,
    #[arg(long)]
    cv_folds: Option<usize>,
    /// Choose λ separately for every column during cross-validation.
    #[arg(long)]
    cv_per_column: bool,
    /// Choose λ′ on its own during cross-validation instead of tying it to λ.
    #[arg(long)]
    cv_separate_lambda_prime: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Configuration file (`key = value` lines); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(short = 'K', long = "clusters")]
    k: Option<usize>,
    #[arg(long)]
    topology: Option<Topology>,
    #[arg(long)]
    signal: Option<f64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Use the true partition instead of clustering.
    #[arg(long)]
    true_partition: bool,
    #[command(flatten)]
    select: SelectionArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    /// Data file: rows are observations, optional header row.
    input: PathBuf,
    /// Known partition (`variable,cluster` CSV); skips clustering.
    #[arg(long)]
    partition: Option<PathBuf>,
    /// Clustering threshold; defaults to the data-driven value.
    #[arg(long)]
    cluster_threshold: Option<f64>,
    #[command(flatten)]
    select: SelectionArgs,
    #[arg(long, value_enum, default_value = "edge-list")]
    format: FormatArg,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    input: PathBuf,
    #[arg(long)]
    cluster_threshold: Option<f64>,
    /// Output partition file.
    #[arg(long, default_value = "partition.csv")]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::EmptyGrid | Error::DomainError(_) => EXIT_CONFIG,
        _ => EXIT_DATA,
    }
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| config_error(format!("cannot create {}: {e}", dir.display())))
}

fn apply_selection(cfg: &mut ExperimentConfig, s: &SelectionArgs) {
    if !s.alpha.is_empty() {
        cfg.alpha = s.alpha.clone();
    }
    if !s.method.is_empty() {
        cfg.method = s.method.iter().map(|&m| m.into()).collect();
    }
    if let Some(g) = s.graph {
        cfg.graph = g.kinds();
    }
    match s.tuning {
        Some(TuningArg::Fixed) => cfg.tuning = TuningMode::Fixed,
        Some(TuningArg::Cv) => cfg.tuning = TuningMode::Cv,
        None => {}
    }
    if s.lambda.is_some() {
        cfg.lambda = s.lambda;
    }
    if s.lambda_prime.is_some() {
        cfg.lambda_prime = s.lambda_prime;
    }
    if let Some(f) = s.cv_folds {
        cfg.cv_folds = f;
    }
    if s.cv_per_column {
        cfg.cv_scope = CvScope::PerColumn;
    }
    if s.cv_separate_lambda_prime {
        cfg.cv_lambda_prime = LambdaPrimeMode::Separate;
    }
    if let Some(seed) = s.seed {
        cfg.seed = seed;
    }
}

fn simulate(args: &SimulateArgs, exec: Execution) -> Result<(), Error> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => {
            let (Some(d), Some(n), Some(k), Some(topology)) = (args.d, args.n, args.k, args.topology) else {
                return Err(config_error("without --config, --d, --n, -K and --topology are required"));
            };
            ExperimentConfig::new(d, n, k, topology)
        }
    };
    if let Some(d) = args.d {
        cfg.d = d;
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(t) = args.topology {
        cfg.topology = t;
    }
    if let Some(c) = args.signal {
        cfg.signal = c;
    }
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    if args.true_partition {
        cfg.true_partition = true;
    }
    apply_selection(&mut cfg, &args.select);
    cfg.validate()?;

    let result = run_experiment(&cfg, exec)?;
    create_dir(&args.out)?;
    write_aggregate_csv(&result.table, args.out.join("aggregate.csv"))?;
    write_summary_json(&result, args.out.join("summary.json"))?;

    println!("graph    method alpha  mean_fdr mean_power n_fail");
    for row in &result.table {
        println!(
            "{:<8} {:<6} {:<6} {:>8.4} {:>10.4} {:>6}",
            row.graph_kind.to_string(),
            row.method.to_string(),
            row.alpha,
            row.mean_fdr,
            row.mean_power,
            row.n_fail
        );
    }
    println!(
        "cluster recovery {:.2}, failed replications {}",
        result.cluster_recovery_rate(),
        result.failed_replications.len()
    );
    Ok(())
}

fn estimate_partition(x: &SampleMatrix, threshold: Option<f64>, exec: Execution) -> Result<Partition, Error> {
    let alpha = threshold.unwrap_or_else(|| default_threshold(&sample_covariance(x), x.n(), DEFAULT_ALPHA0));
    cluster_data(x, Some(alpha), exec)
}

fn infer(args: &InferArgs, exec: Execution) -> Result<(), Error> {
    // defaults and validation come from the experiment config
    let mut cfg = ExperimentConfig::new(2, 2, 2, Topology::Band3);
    apply_selection(&mut cfg, &args.select);
    let data = ingest_csv(&args.input)?.data;
    cfg.d = data.d();
    cfg.n = data.n();
    let g_hat = match &args.partition {
        Some(p) => {
            let g = read_partition(p)?;
            if g.d() != data.d() {
                return Err(Error::ShapeMismatch(format!("partition has {} variables, data has {}", g.d(), data.d())));
            }
            g
        }
        None => estimate_partition(&data, args.cluster_threshold, exec)?,
    };
    cfg.k = g_hat.k();
    if cfg.alpha.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(config_error("alpha must be in (0, 1)"));
    }
    create_dir(&args.out)?;
    write_partition(&g_hat, args.out.join("partition.csv"))?;

    let ext = match args.format {
        FormatArg::EdgeList => "csv",
        FormatArg::Dot => "dot",
    };
    for &kind in &cfg.graph {
        let penalties = match cfg.tuning {
            TuningMode::Fixed => {
                let l = cfg.lambda.unwrap_or_else(|| default_lambda(g_hat.k(), data.n()));
                Penalties::uniform(g_hat.k(), l, cfg.lambda_prime.unwrap_or(l))
            }
            TuningMode::Cv => {
                let options = CvOptions {
                    scope: cfg.cv_scope,
                    lambda_prime: cfg.cv_lambda_prime,
                };
                let grid = default_grid(g_hat.k(), data.n());
                cross_validate_with(&data, &g_hat, kind, cfg.cv_folds, &grid, cfg.seed, options, exec)?.penalties
            }
        };
        let m_hat = moment_matrix(&data, &g_hat, kind)?;
        let inference = infer_with_penalties(&m_hat, data.n(), kind, &penalties, exec)?;
        for &method in &cfg.method {
            for &alpha in &cfg.alpha {
                let report = select(&inference.edges, alpha, method)?;
                let name = format!("{kind}_{}_{alpha}.{ext}", method.to_string().to_lowercase());
                export_graph(&report, &inference.edges, &g_hat, args.out.join(&name), args.format.into())?;
                println!(
                    "{kind} {method} alpha={alpha}: {} of {} edges selected (cutoff {:.3}) -> {name}",
                    report.n_rejections, report.hypotheses, report.cutoff
                );
            }
        }
    }
    println!("{} variables in {} clusters, n = {}", data.d(), g_hat.k(), data.n());
    Ok(())
}

fn cluster(args: &ClusterArgs, exec: Execution) -> Result<(), Error> {
    let data = ingest_csv(&args.input)?.data;
    let g = estimate_partition(&data, args.cluster_threshold, exec)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_partition(&g, &args.out)?;
    println!("{} variables in {} clusters -> {}", data.d(), g.k(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a, exec),
        Command::Infer(a) => infer(a, exec),
        Command::Cluster(a) => cluster(a, exec),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
