//! One-step inference for single entries of the cluster-average precision
//! matrix Ω* and the latent precision matrix Θ*.
//!
//! Both graphs share one code path; they differ only in the second-moment
//! matrix `M̂` fed in (`Ŝ` for the average graph, `Ĉ` for the latent graph).
//! For an edge `(t, k)`:
//!
//! 1. `β̂ = argmin ‖β‖₁  s.t. ‖M̂β − e_k‖∞ ≤ λ` (CLIME-type initial column),
//! 2. `ŵ = argmin ‖w‖₁  s.t. ‖M̂_{t,−t} − wᵀM̂_{−t,−t}‖∞ ≤ λ′`, `v̂ = (1, −ŵ)`,
//! 3. `ĥ = v̂ᵀ(M̂β̂_{·k} − e_k)` and `β̃_tk = β̂_tk − ĥ β̂_tt`,
//! 4. `ŝ² = β̂_tk² + β̂_tt β̂_kk`, `W̃ = √n β̃_tk / ŝ`.

mod simplex;

pub use simplex::{solve as solve_lp, LpSolution};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{averages_covariance, latent_covariance};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{Partition, SampleMatrix};

/// Slack allowed on the ℓ∞ constraints of the ℓ₁ programs.
pub const FEASIBILITY_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Average,
    Latent,
}

impl std::fmt::Display for GraphKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GraphKind::Average => "average",
            GraphKind::Latent => "latent",
        })
    }
}

impl std::str::FromStr for GraphKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "average" => Ok(GraphKind::Average),
            "latent" => Ok(GraphKind::Latent),
            other => Err(Error::Config(format!("unknown graph kind `{other}`"))),
        }
    }
}

/// `2 √(log(K ∨ n) / n)`.
pub fn default_lambda(k: usize, n: usize) -> f64 {
    2.0 * ((k.max(n) as f64).ln() / n as f64).sqrt()
}

/// `argmin ‖β‖₁  s.t.  ‖Aβ − b‖∞ ≤ λ`, solved as a linear program over the
/// split `β = β⁺ − β⁻`.
pub fn l1_min_box(a: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let (m, p) = a.shape();
    if b.len() != m {
        return Err(Error::ShapeMismatch("rhs length differs from row count".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("tuning parameter must be >= 0, got {lambda}")));
    }
    let mut lp = DMatrix::zeros(2 * m, 2 * p);
    let mut rhs = vec![0.0; 2 * m];
    for i in 0..m {
        for j in 0..p {
            let v = a[(i, j)];
            lp[(i, j)] = v;
            lp[(i, p + j)] = -v;
            lp[(m + i, j)] = -v;
            lp[(m + i, p + j)] = v;
        }
        rhs[i] = lambda + b[i];
        rhs[m + i] = lambda - b[i];
    }
    let sol = simplex::solve(&vec![1.0; 2 * p], &lp, &rhs)?;
    Ok(DVector::from_fn(p, |j, _| sol.x[j] - sol.x[p + j]))
}

fn residual_inf(a: &DMatrix<f64>, beta: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a * beta - b).amax()
}

/// Initial estimate of one precision-matrix column.
#[derive(Clone, Debug, PartialEq)]
pub struct ClimeColumn {
    pub k: usize,
    pub beta: DVector<f64>,
    pub lambda: f64,
    pub residual_inf_norm: f64,
}

pub fn clime_column(m_hat: &DMatrix<f64>, k: usize, lambda: f64) -> Result<ClimeColumn> {
    let dim = m_hat.nrows();
    if !m_hat.is_square() || k >= dim {
        return Err(Error::ShapeMismatch(format!("column {k} of a {dim}x{} matrix", m_hat.ncols())));
    }
    let e_k = DVector::from_fn(dim, |i, _| if i == k { 1.0 } else { 0.0 });
    let beta = l1_min_box(m_hat, &e_k, lambda)?;
    let residual_inf_norm = residual_inf(m_hat, &beta, &e_k);
    if residual_inf_norm > lambda + FEASIBILITY_TOL {
        return Err(Error::NotConverged { iterations: 0 });
    }
    Ok(ClimeColumn {
        k,
        beta,
        lambda,
        residual_inf_norm,
    })
}

/// Sparse estimate of `w* = (M_{−t,−t})⁻¹ M_{−t,t}` and the direction
/// `v = (1, −w)` used by the pseudo-score.
#[derive(Clone, Debug, PartialEq)]
pub struct NuisanceProjection {
    pub t: usize,
    pub w: DVector<f64>,
    pub v: DVector<f64>,
    pub lambda_prime: f64,
    pub residual_inf_norm: f64,
}

impl NuisanceProjection {
    /// Builds the projection from a given `w` (length `K − 1`).
    pub fn from_w(t: usize, w: DVector<f64>, lambda_prime: f64) -> Self {
        let dim = w.len() + 1;
        let mut v = DVector::zeros(dim);
        let mut idx = 0;
        for i in 0..dim {
            if i == t {
                v[i] = 1.0;
            } else {
                v[i] = -w[idx];
                idx += 1;
            }
        }
        NuisanceProjection {
            t,
            w,
            v,
            lambda_prime,
            residual_inf_norm: f64::NAN,
        }
    }
}

fn without(dim: usize, t: usize) -> Vec<usize> {
    (0..dim).filter(|&i| i != t).collect()
}

pub fn nuisance_projection(m_hat: &DMatrix<f64>, t: usize, lambda_prime: f64) -> Result<NuisanceProjection> {
    let dim = m_hat.nrows();
    if !m_hat.is_square() || t >= dim {
        return Err(Error::ShapeMismatch(format!("row {t} of a {dim}x{} matrix", m_hat.ncols())));
    }
    let rest = without(dim, t);
    // entry j of M_{t,−t} − wᵀM_{−t,−t} is M_{t,j} − Σ_i w_i M_{i,j}
    let a = m_hat.select_rows(rest.iter()).select_columns(rest.iter()).transpose();
    let b = DVector::from_iterator(rest.len(), rest.iter().map(|&j| m_hat[(t, j)]));
    let w = if rest.is_empty() {
        DVector::zeros(0)
    } else {
        l1_min_box(&a, &b, lambda_prime)?
    };
    let residual_inf_norm = if rest.is_empty() { 0.0 } else { residual_inf(&a, &w, &b) };
    if residual_inf_norm > lambda_prime + FEASIBILITY_TOL {
        return Err(Error::NotConverged { iterations: 0 });
    }
    let mut proj = NuisanceProjection::from_w(t, w, lambda_prime);
    proj.residual_inf_norm = residual_inf_norm;
    Ok(proj)
}

/// `ĥ(β) = vᵀ(M̂β − e_k)`.
pub fn pseudo_score(m_hat: &DMatrix<f64>, v: &DVector<f64>, beta: &DVector<f64>, k: usize) -> f64 {
    let mut r = m_hat * beta;
    r[k] -= 1.0;
    v.dot(&r)
}

/// One-step update `β̂_tk − ĥ(β̂_{·k}) β̂_tt`.
///
/// `col_k` is the initial estimate of column `k`; `col_t` supplies the
/// diagonal entry `β̂_tt`.
pub fn one_step_edge(
    m_hat: &DMatrix<f64>,
    col_k: &DVector<f64>,
    col_t: &DVector<f64>,
    proj: &NuisanceProjection,
    t: usize,
    k: usize,
) -> f64 {
    let h = pseudo_score(m_hat, &proj.v, col_k, k);
    col_k[t] - h * col_t[t]
}

/// `sqrt(β̂_tk² + β̂_tt β̂_kk)`.
pub fn edge_std(beta_tk: f64, beta_tt: f64, beta_kk: f64) -> Option<f64> {
    let var = beta_tk * beta_tk + beta_tt * beta_kk;
    (var > 0.0 && var.is_finite()).then(|| var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeStatus {
    Ok,
    NonPositiveVariance,
    SolverFailure(String),
}

/// Per-edge estimate, standard error and test statistic.
///
/// Edges that could not be assessed carry `NaN` in `std`/`stat` (and possibly
/// `estimate`) and a non-`Ok` status; they count as hypotheses but are never
/// rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeInference {
    pub t: usize,
    pub k: usize,
    pub estimate: f64,
    pub std: f64,
    pub stat: f64,
    pub graph_kind: GraphKind,
    pub status: EdgeStatus,
}

impl EdgeInference {
    pub fn is_valid(&self) -> bool {
        self.status == EdgeStatus::Ok && self.stat.is_finite()
    }
}

/// Per-index tuning: `lambda[k]` for the CLIME column `k`, `lambda_prime[t]`
/// for the projection of row `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    pub lambda: Vec<f64>,
    pub lambda_prime: Vec<f64>,
}

impl Penalties {
    pub fn uniform(dim: usize, lambda: f64, lambda_prime: f64) -> Self {
        Penalties {
            lambda: vec![lambda; dim],
            lambda_prime: vec![lambda_prime; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    /// Means over indices (the common values when uniform).
    pub fn means(&self) -> (f64, f64) {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        (mean(&self.lambda), mean(&self.lambda_prime))
    }
}

#[derive(Clone, Debug)]
pub struct GraphInference {
    pub kind: GraphKind,
    pub k: usize,
    pub n: usize,
    pub penalties: Penalties,
    /// Edges `(t, k)`, `t < k`, in lexicographic order.
    pub edges: Vec<EdgeInference>,
}

/// Runs the per-edge procedure on every pair `t < k` of a given `M̂`.
///
/// CLIME columns and projections are computed once per index and reused.
pub fn infer_from_matrix(
    m_hat: &DMatrix<f64>,
    n: usize,
    kind: GraphKind,
    lambda: f64,
    lambda_prime: f64,
    exec: Execution,
) -> Result<GraphInference> {
    let penalties = Penalties::uniform(m_hat.nrows(), lambda, lambda_prime);
    infer_with_penalties(m_hat, n, kind, &penalties, exec)
}

/// [`infer_from_matrix`] with a separate penalty per column and per row.
pub fn infer_with_penalties(
    m_hat: &DMatrix<f64>,
    n: usize,
    kind: GraphKind,
    penalties: &Penalties,
    exec: Execution,
) -> Result<GraphInference> {
    if !m_hat.is_square() {
        return Err(Error::ShapeMismatch("M̂ must be square".into()));
    }
    let dim = m_hat.nrows();
    if penalties.lambda.len() != dim || penalties.lambda_prime.len() != dim {
        return Err(Error::ShapeMismatch(format!("{} penalties for dimension {dim}", penalties.dim())));
    }
    let columns = exec.map(dim, |k| clime_column(m_hat, k, penalties.lambda[k]).map_err(|e| e.to_string()));
    let projections = exec.map(dim, |t| {
        nuisance_projection(m_hat, t, penalties.lambda_prime[t]).map_err(|e| e.to_string())
    });
    let root_n = (n as f64).sqrt();

    let pairs: Vec<(usize, usize)> = (0..dim).flat_map(|t| (t + 1..dim).map(move |k| (t, k))).collect();
    let edges = exec.map(pairs.len(), |p| {
        let (t, k) = pairs[p];
        let failed = |msg: String| EdgeInference {
            t,
            k,
            estimate: f64::NAN,
            std: f64::NAN,
            stat: f64::NAN,
            graph_kind: kind,
            status: EdgeStatus::SolverFailure(msg),
        };
        let (col_k, col_t, proj) = match (&columns[k], &columns[t], &projections[t]) {
            (Ok(a), Ok(b), Ok(c)) => (a, b, c),
            (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => return failed(e.clone()),
        };
        let estimate = one_step_edge(m_hat, &col_k.beta, &col_t.beta, proj, t, k);
        match edge_std(col_k.beta[t], col_t.beta[t], col_k.beta[k]) {
            Some(std) => EdgeInference {
                t,
                k,
                estimate,
                std,
                stat: root_n * estimate / std,
                graph_kind: kind,
                status: EdgeStatus::Ok,
            },
            None => EdgeInference {
                t,
                k,
                estimate,
                std: f64::NAN,
                stat: f64::NAN,
                graph_kind: kind,
                status: EdgeStatus::NonPositiveVariance,
            },
        }
    });
    Ok(GraphInference {
        kind,
        k: dim,
        n,
        penalties: penalties.clone(),
        edges,
    })
}

/// The second-moment matrix used for `kind`: `Ŝ` or `Ĉ`.
pub fn moment_matrix(x: &SampleMatrix, g_hat: &Partition, kind: GraphKind) -> Result<DMatrix<f64>> {
    Ok(match kind {
        GraphKind::Average => averages_covariance(x, g_hat)?.s_hat,
        GraphKind::Latent => latent_covariance(x, g_hat)?.c_hat,
    })
}

pub fn infer_graph(
    x: &SampleMatrix,
    g_hat: &Partition,
    kind: GraphKind,
    lambda: f64,
    lambda_prime: f64,
    exec: Execution,
) -> Result<GraphInference> {
    let m_hat = moment_matrix(x, g_hat, kind)?;
    infer_from_matrix(&m_hat, x.n(), kind, lambda, lambda_prime, exec)
}
