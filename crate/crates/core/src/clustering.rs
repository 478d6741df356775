//! Model-assisted variable clustering.
//!
//! The dissimilarity between variables `a` and `b` is the studentized
//! covariance difference
//!
//! ```text
//! V(a,b) = max_{c,d ∉ {a,b}} |(Σ_ac − Σ_ad) − (Σ_bc − Σ_bd)| / sqrt(Σ_cc + Σ_dd − 2Σ_cd)
//! ```
//!
//! which vanishes at the population level exactly when `a` and `b` load on
//! the same latent coordinate. Clusters are built greedily by thresholding
//! `V`. The greedy linking rule is a reconstruction of the COD procedure,
//! whose exact linking order is not pinned down by the model.

use nalgebra::DMatrix;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{Partition, SampleMatrix};

/// Denominators at or below this are treated as zero.
pub const DEGENERATE_TOL: f64 = 1e-12;

/// Multiplier of the default clustering threshold.
pub const DEFAULT_ALPHA0: f64 = 2.0;

/// Uncentered second-moment matrix `n⁻¹ Σᵢ XᵢXᵢᵀ`.
pub fn sample_covariance(x: &SampleMatrix) -> DMatrix<f64> {
    let data = x.data();
    let mut s = data.tr_mul(data);
    s /= x.n() as f64;
    s
}

/// Pairwise V-metric values.
#[derive(Clone, Debug, PartialEq)]
pub struct CodMetric {
    v: DMatrix<f64>,
}

impl CodMetric {
    pub fn d(&self) -> usize {
        self.v.nrows()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.v[(a, b)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn from_matrix(v: DMatrix<f64>) -> Result<Self> {
        if !v.is_square() {
            return Err(Error::ShapeMismatch("V-metric matrix must be square".into()));
        }
        Ok(CodMetric { v })
    }
}

/// Inverse standard deviations of `X_c − X_d`, zero where degenerate.
///
/// A zero weight drops the probe pair from the maximum. That covers both the
/// `0/0 = 0` convention and numerically unusable pairs with a non-zero
/// numerator, because every admissible term is non-negative anyway.
fn probe_weights(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let d = sigma.nrows();
    DMatrix::from_fn(d, d, |c, e| {
        if c == e {
            return 0.0;
        }
        let var = sigma[(c, c)] + sigma[(e, e)] - 2.0 * sigma[(c, e)];
        if var > DEGENERATE_TOL {
            1.0 / var.sqrt()
        } else {
            0.0
        }
    })
}

fn cod_values(sigma: &DMatrix<f64>, exec: Execution) -> DMatrix<f64> {
    let d = sigma.nrows();
    let w = probe_weights(sigma);
    let rows = exec.map(d, |a| {
        let mut row = vec![0.0; d];
        let mut u = vec![0.0; d];
        for (b, out) in row.iter_mut().enumerate().skip(a + 1) {
            for c in 0..d {
                u[c] = sigma[(a, c)] - sigma[(b, c)];
            }
            let mut best = 0.0f64;
            for c in 0..d {
                if c == a || c == b {
                    continue;
                }
                let uc = u[c];
                let wc = w.column(c);
                for e in c + 1..d {
                    if e == a || e == b {
                        continue;
                    }
                    let val = (uc - u[e]).abs() * wc[e];
                    if val > best {
                        best = val;
                    }
                }
            }
            *out = best;
        }
        row
    });
    let mut v = DMatrix::zeros(d, d);
    for (a, row) in rows.into_iter().enumerate() {
        for b in a + 1..d {
            v[(a, b)] = row[b];
            v[(b, a)] = row[b];
        }
    }
    v
}

pub fn cod_metric(sigma_hat: &DMatrix<f64>, exec: Execution) -> Result<CodMetric> {
    let d = sigma_hat.nrows();
    if !sigma_hat.is_square() {
        return Err(Error::ShapeMismatch("covariance must be square".into()));
    }
    if d < 4 {
        return Err(Error::DimensionTooSmall { d, required: 4 });
    }
    Ok(CodMetric {
        v: cod_values(sigma_hat, exec),
    })
}

/// Diagonal pre-clustering estimate of the noise variances.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaTilde {
    pub diag: Vec<f64>,
    /// `(b₁(a), b₂(a))`: the two variables closest to `a` in V.
    pub neighbors: Vec<(usize, usize)>,
}

fn argmin_excluding(row: impl Iterator<Item = f64>, exclude: &[usize]) -> usize {
    let mut best = (usize::MAX, f64::INFINITY);
    for (b, v) in row.enumerate() {
        if exclude.contains(&b) {
            continue;
        }
        if v < best.1 || best.0 == usize::MAX {
            best = (b, v);
        }
    }
    best.0
}

pub fn estimate_gamma_tilde(sigma_hat: &DMatrix<f64>, exec: Execution) -> Result<GammaTilde> {
    let d = sigma_hat.nrows();
    if !sigma_hat.is_square() {
        return Err(Error::ShapeMismatch("covariance must be square".into()));
    }
    if d < 3 {
        return Err(Error::DimensionTooSmall { d, required: 3 });
    }
    let v = cod_values(sigma_hat, exec);
    gamma_tilde_from_metric(sigma_hat, &CodMetric { v })
}

/// Same as [`estimate_gamma_tilde`] with a precomputed metric.
pub fn gamma_tilde_from_metric(sigma_hat: &DMatrix<f64>, v: &CodMetric) -> Result<GammaTilde> {
    let d = sigma_hat.nrows();
    if v.d() != d {
        return Err(Error::ShapeMismatch("metric and covariance sizes differ".into()));
    }
    if d < 3 {
        return Err(Error::DimensionTooSmall { d, required: 3 });
    }
    let mut diag = Vec::with_capacity(d);
    let mut neighbors = Vec::with_capacity(d);
    for a in 0..d {
        let b1 = argmin_excluding(v.v.row(a).iter().copied(), &[a]);
        let b2 = argmin_excluding(v.v.row(a).iter().copied(), &[a, b1]);
        let s = sigma_hat;
        diag.push(s[(a, a)] + s[(b1, b2)] - s[(a, b1)] - s[(a, b2)]);
        neighbors.push((b1, b2));
    }
    Ok(GammaTilde { diag, neighbors })
}

/// `α₀ · median_{c<d} sqrt(Σ_cc + Σ_dd − 2Σ_cd) · sqrt(log(d ∨ n) / n)`.
pub fn default_threshold(sigma_hat: &DMatrix<f64>, n: usize, alpha0: f64) -> f64 {
    let d = sigma_hat.nrows();
    let mut sds: Vec<f64> = (0..d)
        .flat_map(|c| (c + 1..d).map(move |e| (c, e)))
        .map(|(c, e)| {
            (sigma_hat[(c, c)] + sigma_hat[(e, e)] - 2.0 * sigma_hat[(c, e)])
                .max(0.0)
                .sqrt()
        })
        .collect();
    if sds.is_empty() {
        return 0.0;
    }
    sds.sort_by(f64::total_cmp);
    let mid = sds.len() / 2;
    let median = if sds.len() % 2 == 1 {
        sds[mid]
    } else {
        0.5 * (sds[mid - 1] + sds[mid])
    };
    let dn = d.max(n) as f64;
    alpha0 * median * (dn.ln() / n as f64).sqrt()
}

/// Greedy threshold clustering: the lowest-index unassigned variable opens a
/// cluster and absorbs every unassigned `b` with `V(a,b) ≤ α`.
pub fn cod_cluster(v: &CodMetric, alpha: f64) -> Result<Partition> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be >= 0, got {alpha}")));
    }
    let d = v.d();
    let mut labels = vec![usize::MAX; d];
    let mut next = 0;
    for a in 0..d {
        if labels[a] != usize::MAX {
            continue;
        }
        labels[a] = next;
        for b in a + 1..d {
            if labels[b] == usize::MAX && v.get(a, b) <= alpha {
                labels[b] = next;
            }
        }
        next += 1;
    }
    Partition::from_labels(&labels)
}

/// Full data-to-partition path: Σ̂, V, threshold (default if `None`), greedy.
pub fn cluster_data(x: &SampleMatrix, alpha: Option<f64>, exec: Execution) -> Result<Partition> {
    let sigma = sample_covariance(x);
    let v = cod_metric(&sigma, exec)?;
    let alpha = alpha.unwrap_or_else(|| default_threshold(&sigma, x.n(), DEFAULT_ALPHA0));
    cod_cluster(&v, alpha)
}

/// Semidefinite (PECOK) clustering is not provided; use [`cod_cluster`].
pub fn pecok_cluster(_sigma_hat: &DMatrix<f64>, _gamma: &GammaTilde, _k: usize) -> Result<Partition> {
    Err(Error::NotImplemented("PECOK semidefinite clustering"))
}

/// An estimated partition relabeled into the reference label space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignedPartition {
    /// Per-variable labels after relabeling. Estimated clusters without a
    /// reference partner get fresh labels starting at the reference `K`.
    pub labels: Vec<usize>,
    /// `mapping[e]` is the reference cluster matched to estimated cluster `e`.
    pub mapping: Vec<Option<usize>>,
    /// Number of variables whose relabeled cluster equals the reference one.
    pub overlap: usize,
    pub exact_match: bool,
}

/// Maximum-weight assignment on a rectangular weight matrix; returns for
/// each row the matched column, if any.
fn max_weight_assignment(weights: &[Vec<i64>], cols: usize) -> Vec<Option<usize>> {
    let rows = weights.len();
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    // zero-padded to square
    let square = Matrix::from_fn(n, n, |(i, j)| if i < rows && j < cols { weights[i][j] } else { 0 });
    let (_, assignment) = kuhn_munkres(&square);
    assignment[..rows].iter().map(|&j| (j < cols).then_some(j)).collect()
}

/// Relabels `estimated` to maximize agreement with `reference`.
///
/// The matching is solved exactly (Kuhn-Munkres) for any number of clusters.
pub fn align_partition(estimated: &Partition, reference: &Partition) -> Result<AlignedPartition> {
    if estimated.d() != reference.d() {
        return Err(Error::ShapeMismatch(format!(
            "partitions cover {} and {} variables",
            estimated.d(),
            reference.d()
        )));
    }
    let (ke, kr) = (estimated.k(), reference.k());
    let mut overlap = vec![vec![0i64; kr]; ke];
    for j in 0..estimated.d() {
        overlap[estimated.label(j)][reference.label(j)] += 1;
    }
    let mut mapping = max_weight_assignment(&overlap, kr);
    for (e, m) in mapping.iter_mut().enumerate() {
        // a zero-overlap match carries no information
        if let Some(r) = *m {
            if overlap[e][r] == 0 {
                *m = None;
            }
        }
    }
    let mut fresh = kr;
    let relabel: Vec<usize> = mapping
        .iter()
        .map(|m| {
            m.unwrap_or_else(|| {
                fresh += 1;
                fresh - 1
            })
        })
        .collect();
    let labels: Vec<usize> = estimated.labels().iter().map(|&e| relabel[e]).collect();
    let total = labels
        .iter()
        .zip(reference.labels())
        .filter(|(a, b)| a == b)
        .count();
    Ok(AlignedPartition {
        labels,
        mapping,
        overlap: total,
        exact_match: estimated == reference,
    })
}
