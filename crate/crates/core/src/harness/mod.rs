//! Simulation protocol, cross-validation, and file I/O.
//!
//! One replication runs: graph → Θ* → model (Γ* entries `U[0.25, 0.5]`) →
//! sample → cluster → infer both graphs → select edges → score. Replication
//! `r` uses seed `base_seed + r`, so any single replication can be replayed.

mod cv;
mod io;

pub use cv::{cross_validate, cross_validate_with, default_grid, CvChoice, CvOptions, CvScope, LambdaPrimeMode};
pub use io::{
    export_graph, ingest_csv, read_partition, write_aggregate_csv, write_partition, write_summary_json,
    GraphFormat, IngestedData,
};

use std::collections::BTreeSet;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::clustering::{align_partition, cluster_data, default_threshold, sample_covariance, DEFAULT_ALPHA0};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fdr::{score_edges, select, FdrMethod};
use crate::graph::{generate, ground_truth, precision_from_adjacency, GroundTruthEdges, Topology};
use crate::inference::{default_lambda, infer_with_penalties, moment_matrix, GraphKind, Penalties};
use crate::model::{build_model, LatentModel, Partition, SampleMatrix};
use crate::rng;

pub const GAMMA_RANGE: (f64, f64) = (0.25, 0.5);

fn default_alphas() -> Vec<f64> {
    vec![0.05, 0.1, 0.2]
}
fn default_methods() -> Vec<FdrMethod> {
    vec![FdrMethod::BenjaminiYekutieli, FdrMethod::BenjaminiHochberg]
}
fn default_graphs() -> Vec<GraphKind> {
    vec![GraphKind::Latent, GraphKind::Average]
}
fn default_signal() -> f64 {
    0.3
}
fn default_replications() -> usize {
    1
}
fn default_folds() -> usize {
    5
}
fn default_alpha0() -> f64 {
    DEFAULT_ALPHA0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuningMode {
    #[default]
    Fixed,
    Cv,
}

/// Flat experiment description; every field mirrors a CLI flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub topology: Topology,
    #[serde(default = "default_signal")]
    pub signal: f64,
    #[serde(default = "default_alphas")]
    pub alpha: Vec<f64>,
    #[serde(default = "default_methods")]
    pub method: Vec<FdrMethod>,
    #[serde(default = "default_graphs")]
    pub graph: Vec<GraphKind>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tuning: TuningMode,
    /// Fixed λ; defaults to `2√(log(K̂ ∨ n)/n)`.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Fixed λ′; defaults to λ.
    #[serde(default)]
    pub lambda_prime: Option<f64>,
    #[serde(default = "default_folds")]
    pub cv_folds: usize,
    /// CV grid; defaults to [`default_grid`].
    #[serde(default)]
    pub cv_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub cv_scope: CvScope,
    /// Select λ′ separately instead of tying it to λ.
    #[serde(default)]
    pub cv_lambda_prime: LambdaPrimeMode,
    /// Skip clustering and use the true partition.
    #[serde(default)]
    pub true_partition: bool,
    /// Multiplier of the default clustering threshold.
    #[serde(default = "default_alpha0")]
    pub cluster_alpha0: f64,
}

impl ExperimentConfig {
    pub fn new(d: usize, n: usize, k: usize, topology: Topology) -> Self {
        ExperimentConfig {
            d,
            n,
            k,
            topology,
            signal: default_signal(),
            alpha: default_alphas(),
            method: default_methods(),
            graph: default_graphs(),
            replications: default_replications(),
            seed: 0,
            tuning: TuningMode::Fixed,
            lambda: None,
            lambda_prime: None,
            cv_folds: default_folds(),
            cv_grid: None,
            cv_scope: CvScope::Global,
            cv_lambda_prime: LambdaPrimeMode::Tied,
            true_partition: false,
            cluster_alpha0: DEFAULT_ALPHA0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Smallest cluster size of the balanced partition.
    pub fn m(&self) -> usize {
        self.d / self.k.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.k < 2 || self.k > self.d {
            return fail(format!("need 2 <= K <= d, got K={}, d={}", self.k, self.d));
        }
        if self.m() < 2 {
            return fail(format!("clusters of size {} are too small", self.m()));
        }
        if self.n < 2 {
            return fail(format!("need n >= 2, got {}", self.n));
        }
        if self.replications == 0 {
            return fail("replications must be >= 1".into());
        }
        if let Some(a) = self.alpha.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return fail(format!("alpha {a} is outside (0, 1)"));
        }
        if self.alpha.is_empty() || self.method.is_empty() || self.graph.is_empty() {
            return fail("alpha, method and graph lists must be non-empty".into());
        }
        if !(self.signal > 0.0) {
            return fail(format!("signal must be positive, got {}", self.signal));
        }
        if self.tuning == TuningMode::Cv && (self.cv_folds < 2 || self.cv_folds > self.n / 2) {
            return fail(format!("cv_folds = {} is invalid for n = {}", self.cv_folds, self.n));
        }
        if self.topology == Topology::Hub && !self.k.is_multiple_of(5) && !self.k.is_multiple_of(6) {
            return fail(format!("hub graphs need K divisible by 5 or 6, got {}", self.k));
        }
        Ok(())
    }
}

/// Ground truth of one replication.
pub fn replication_model(config: &ExperimentConfig, seed: u64) -> Result<LatentModel> {
    let w = generate(config.topology, config.k, seed)?;
    let theta = precision_from_adjacency(&w, config.signal)?;
    let partition = Partition::round_robin(config.d, config.k)?;
    let mut rng = rng::stream(seed, rng::STREAM_GAMMA);
    let gamma = DVector::from_fn(config.d, |_, _| rng.random_range(GAMMA_RANGE.0..GAMMA_RANGE.1));
    build_model(partition, theta, gamma)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub graph_kind: GraphKind,
    pub method: FdrMethod,
    pub alpha: f64,
    pub fdr: f64,
    pub power: f64,
    pub n_rejections: usize,
    pub cutoff: f64,
    /// Selected edges in the reference labeling; edges that do not map onto
    /// a pair of distinct reference clusters are dropped here but counted as
    /// false discoveries in `fdr`.
    pub selected: BTreeSet<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub seed: u64,
    pub exact_cluster_recovery: bool,
    pub k_hat: usize,
    /// `(graph, λ, λ′)`; per-column choices are averaged over columns.
    pub lambda: Vec<(GraphKind, f64, f64)>,
    pub cells: Vec<CellRecord>,
    pub failures: Vec<(GraphKind, String)>,
    pub runtime_ms: Vec<(GraphKind, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub graph_kind: GraphKind,
    pub method: FdrMethod,
    pub alpha: f64,
    pub topology: Topology,
    #[serde(rename = "K")]
    pub k: usize,
    pub m: usize,
    pub mean_fdr: f64,
    pub mean_power: f64,
    pub n_fail: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub records: Vec<ReplicationRecord>,
    pub table: Vec<AggregateRow>,
    /// Replications that failed before inference (model or sampling).
    pub failed_replications: Vec<(usize, String)>,
}

impl ExperimentResult {
    pub fn cell(&self, kind: GraphKind, method: FdrMethod, alpha: f64) -> Option<&AggregateRow> {
        self.table
            .iter()
            .find(|r| r.graph_kind == kind && r.method == method && r.alpha == alpha)
    }

    pub fn cluster_recovery_rate(&self) -> f64 {
        let hits = self.records.iter().filter(|r| r.exact_cluster_recovery).count();
        hits as f64 / self.records.len().max(1) as f64
    }
}

/// Chooses the penalties for one graph according to the config.
fn tuning_for(
    config: &ExperimentConfig,
    x: &SampleMatrix,
    g_hat: &Partition,
    kind: GraphKind,
    seed: u64,
) -> Result<Penalties> {
    match config.tuning {
        TuningMode::Fixed => {
            let lambda = config.lambda.unwrap_or_else(|| default_lambda(g_hat.k(), x.n()));
            Ok(Penalties::uniform(g_hat.k(), lambda, config.lambda_prime.unwrap_or(lambda)))
        }
        TuningMode::Cv => {
            let grid = config
                .cv_grid
                .clone()
                .unwrap_or_else(|| default_grid(g_hat.k(), x.n()));
            let options = CvOptions {
                scope: config.cv_scope,
                lambda_prime: config.cv_lambda_prime,
            };
            let choice = cross_validate_with(x, g_hat, kind, config.cv_folds, &grid, seed, options, Execution::Sequential)?;
            Ok(choice.penalties)
        }
    }
}

/// Maps an estimated-label edge into the reference labeling.
fn map_edge(mapping: &[Option<usize>], (t, k): (usize, usize)) -> Option<(usize, usize)> {
    let (a, b) = (mapping[t]?, mapping[k]?);
    match a.cmp(&b) {
        std::cmp::Ordering::Less => Some((a, b)),
        std::cmp::Ordering::Greater => Some((b, a)),
        std::cmp::Ordering::Equal => None,
    }
}

pub fn score_mapped(
    selected: &BTreeSet<(usize, usize)>,
    mapping: &[Option<usize>],
    true_edges: &BTreeSet<(usize, usize)>,
) -> (f64, f64, BTreeSet<(usize, usize)>) {
    let mapped: BTreeSet<(usize, usize)> = selected.iter().filter_map(|&e| map_edge(mapping, e)).collect();
    // two estimated edges can collapse onto one reference edge; each still
    // counts as a discovery
    let hits = selected
        .iter()
        .filter_map(|&e| map_edge(mapping, e))
        .filter(|e| true_edges.contains(e))
        .count();
    let r = selected.len();
    let fdr = (r - hits) as f64 / r.max(1) as f64;
    let (_, power) = score_edges(&mapped, true_edges);
    (fdr, power, mapped)
}

/// Runs replication `index` of `config` (inner loops sequential).
pub fn run_replication(config: &ExperimentConfig, index: usize) -> Result<ReplicationRecord> {
    let seed = config.seed.wrapping_add(index as u64);
    let model = replication_model(config, seed)?;
    let truth: GroundTruthEdges = ground_truth(&model);
    let x = model.sample(config.n, seed)?;

    let g_hat = if config.true_partition {
        model.partition().clone()
    } else {
        let sigma = sample_covariance(&x);
        let alpha = default_threshold(&sigma, x.n(), config.cluster_alpha0);
        cluster_data(&x, Some(alpha), Execution::Sequential)?
    };
    let aligned = align_partition(&g_hat, model.partition())?;

    let mut record = ReplicationRecord {
        index,
        seed,
        exact_cluster_recovery: aligned.exact_match,
        k_hat: g_hat.k(),
        lambda: Vec::new(),
        cells: Vec::new(),
        failures: Vec::new(),
        runtime_ms: Vec::new(),
    };
    for &kind in &config.graph {
        let started = Instant::now();
        let outcome = tuning_for(config, &x, &g_hat, kind, seed).and_then(|pen| {
            let m_hat = moment_matrix(&x, &g_hat, kind)?;
            infer_with_penalties(&m_hat, x.n(), kind, &pen, Execution::Sequential)
        });
        let inference = match outcome {
            Ok(v) => v,
            Err(e) => {
                record.failures.push((kind, e.to_string()));
                continue;
            }
        };
        let (lambda, lambda_prime) = inference.penalties.means();
        record.lambda.push((kind, lambda, lambda_prime));
        let true_edges = match kind {
            GraphKind::Latent => &truth.latent_edges,
            GraphKind::Average => &truth.average_edges,
        };
        for &method in &config.method {
            for &alpha in &config.alpha {
                let report = select(&inference.edges, alpha, method)?;
                let (fdr, power, mapped) = score_mapped(&report.selected, &aligned.mapping, true_edges);
                record.cells.push(CellRecord {
                    graph_kind: kind,
                    method,
                    alpha,
                    fdr,
                    power,
                    n_rejections: report.n_rejections,
                    cutoff: report.cutoff,
                    selected: mapped,
                });
            }
        }
        record.runtime_ms.push((kind, started.elapsed().as_secs_f64() * 1e3));
    }
    Ok(record)
}

fn aggregate(config: &ExperimentConfig, records: &[ReplicationRecord], failed: usize) -> Vec<AggregateRow> {
    let mut table = Vec::new();
    for &kind in &config.graph {
        for &method in &config.method {
            for &alpha in &config.alpha {
                let cells: Vec<&CellRecord> = records
                    .iter()
                    .flat_map(|r| r.cells.iter())
                    .filter(|c| c.graph_kind == kind && c.method == method && c.alpha == alpha)
                    .collect();
                let count = cells.len().max(1) as f64;
                table.push(AggregateRow {
                    graph_kind: kind,
                    method,
                    alpha,
                    topology: config.topology,
                    k: config.k,
                    m: config.m(),
                    mean_fdr: cells.iter().map(|c| c.fdr).sum::<f64>() / count,
                    mean_power: cells.iter().map(|c| c.power).sum::<f64>() / count,
                    n_fail: records.len() + failed - cells.len(),
                });
            }
        }
    }
    table
}

/// Runs every replication of `config` and aggregates the results.
///
/// Replications are distributed over `exec`; aggregation always folds them
/// in index order.
pub fn run_experiment(config: &ExperimentConfig, exec: Execution) -> Result<ExperimentResult> {
    config.validate()?;
    let outcomes = exec.map(config.replications, |r| run_replication(config, r));
    let mut records = Vec::with_capacity(config.replications);
    let mut failed_replications = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(rec) => records.push(rec),
            Err(e) => failed_replications.push((r, e.to_string())),
        }
    }
    let table = aggregate(config, &records, failed_replications.len());
    Ok(ExperimentResult {
        config: config.clone(),
        records,
        table,
        failed_replications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::new(40, 400, 8, Topology::Band3);
        c.replications = 2;
        c.seed = 17;
        c
    }

    #[test]
    fn deterministic_records() {
        let cfg = small();
        let a = run_experiment(&cfg, Execution::Parallel).unwrap();
        let b = run_experiment(&cfg, Execution::Sequential).unwrap();
        assert_eq!(a.records.len(), 2);
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.seed, rb.seed);
            assert_eq!(ra.cells, rb.cells);
            assert_eq!(ra.exact_cluster_recovery, rb.exact_cluster_recovery);
        }
        assert_eq!(a.records[1].seed, 18);
        assert_eq!(a.table, b.table);
        assert_eq!(a.table.len(), 2 * 2 * 3);
    }

    #[test]
    fn aggregate_is_mean_of_cells() {
        let res = run_experiment(&small(), Execution::Sequential).unwrap();
        let row = res.cell(GraphKind::Latent, FdrMethod::BenjaminiYekutieli, 0.1).unwrap();
        let cells: Vec<&CellRecord> = res
            .records
            .iter()
            .flat_map(|r| &r.cells)
            .filter(|c| c.graph_kind == GraphKind::Latent && c.method == FdrMethod::BenjaminiYekutieli && c.alpha == 0.1)
            .collect();
        let mean = cells.iter().map(|c| c.fdr).sum::<f64>() / cells.len() as f64;
        assert_eq!(row.mean_fdr, mean);
        assert_eq!(row.n_fail, 2 - cells.len());
    }

    #[test]
    fn band_truth_has_294_edges() {
        let cfg = ExperimentConfig::new(200, 100, 100, Topology::Band3);
        let model = replication_model(&cfg, 3).unwrap();
        assert_eq!(ground_truth(&model).latent_edges.len(), 294);
    }

    #[test]
    fn config_parsing() {
        let cfg = ExperimentConfig::from_toml(
            "d = 60\nn = 300\nK = 10\ntopology = \"hub\"\nalpha = [0.1]\nmethod = [\"BY\"]\ngraph = [\"latent\"]\nseed = 4\n",
        )
        .unwrap();
        assert_eq!(cfg.k, 10);
        assert_eq!(cfg.topology, Topology::Hub);
        assert_eq!(cfg.method, vec![FdrMethod::BenjaminiYekutieli]);
        assert!(ExperimentConfig::from_toml("d = 60\nn = 300\nK = 10\ntopology = \"hub\"\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("d = 60\nn = 300\nK = 10\ntopology = \"hub\"\nalpha = [1.5]\n").is_err());
    }

    #[test]
    fn mapped_scoring() {
        let truth: BTreeSet<_> = [(0, 1), (1, 2)].into_iter().collect();
        let mapping = vec![Some(1), Some(0), Some(2), None];
        let sel: BTreeSet<_> = [(0, 1), (0, 2), (2, 3)].into_iter().collect();
        let (fdr, power, mapped) = score_mapped(&sel, &mapping, &truth);
        assert_eq!(mapped, [(0, 1), (1, 2)].into_iter().collect());
        assert!((fdr - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(power, 1.0);
    }
}
