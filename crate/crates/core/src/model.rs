//! The G-block latent model `X = AZ + E`, its population matrices, and sampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Smallest eigenvalue accepted as positive definite.
pub const PD_TOLERANCE: f64 = 1e-8;

/// Assignment of `d` variables to `K` disjoint, non-empty clusters.
///
/// Labels are canonical: cluster ids are numbered `0..K` in order of first
/// appearance along the columns, so two partitions that group the variables
/// the same way compare equal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Partition {
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidPartition("no variables".into()));
        }
        let mut remap = std::collections::HashMap::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        let mut canonical = Vec::with_capacity(labels.len());
        for (j, &l) in labels.iter().enumerate() {
            let id = *remap.entry(l).or_insert_with(|| {
                members.push(Vec::new());
                members.len() - 1
            });
            members[id].push(j);
            canonical.push(id);
        }
        Ok(Partition {
            labels: canonical,
            members,
        })
    }

    /// Labels `j mod K`: every cluster has size `floor(d/K)` or `ceil(d/K)`.
    pub fn round_robin(d: usize, k: usize) -> Result<Self> {
        if k == 0 || k > d {
            return Err(Error::InvalidPartition(format!(
                "cannot split {d} variables into {k} clusters"
            )));
        }
        Self::from_labels(&(0..d).map(|j| j % k).collect::<Vec<_>>())
    }

    /// Contiguous blocks with the given sizes.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        if sizes.contains(&0) {
            return Err(Error::InvalidPartition("empty cluster".into()));
        }
        let labels: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
            .collect();
        Self::from_labels(&labels)
    }

    pub fn d(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, j: usize) -> usize {
        self.labels[j]
    }

    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn min_size(&self) -> usize {
        self.members.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub(crate) fn require_no_singletons(&self) -> Result<()> {
        match self.members.iter().position(|m| m.len() < 2) {
            Some(cluster) => Err(Error::SingletonCluster { cluster }),
            None => Ok(()),
        }
    }

    /// The `d × K` membership matrix `A`.
    pub fn membership_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d(), self.k(), |j, k| {
            if self.labels[j] == k {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// `n × d` matrix of observations, one row per draw of `X`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    data: DMatrix<f64>,
}

impl SampleMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 observations, got {}",
                data.nrows()
            )));
        }
        if data.ncols() == 0 {
            return Err(Error::InvalidArgument("no variables".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite entry".into()));
        }
        Ok(SampleMatrix { data })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    /// Rows with the given indices, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        Self::new(self.data.select_rows(rows.iter()))
    }

    /// Subtracts the column means in place.
    pub fn center(&mut self) {
        let n = self.n() as f64;
        for mut col in self.data.column_iter_mut() {
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
        }
    }
}

/// Ground truth of the G-block model together with its derived population
/// matrices.
#[derive(Clone, Debug)]
pub struct LatentModel {
    partition: Partition,
    theta_star: DMatrix<f64>,
    gamma_star: DVector<f64>,
    c_star: DMatrix<f64>,
    c_chol: DMatrix<f64>,
    sigma_star: DMatrix<f64>,
    s_star: DMatrix<f64>,
    omega_star: DMatrix<f64>,
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch(format!("{what} is not square")));
    }
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidArgument(format!("{what} is not symmetric")));
            }
        }
    }
    Ok(())
}

fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m.clone().cholesky().ok_or(Error::NonPositiveDefinite {
        lambda_min: lambda_min(m),
    })?;
    let mut inv = chol.inverse();
    inv = (&inv + inv.transpose()) * 0.5;
    Ok(inv)
}

impl LatentModel {
    pub fn new(
        partition: Partition,
        theta_star: DMatrix<f64>,
        gamma_star: DVector<f64>,
    ) -> Result<Self> {
        let k = partition.k();
        if theta_star.nrows() != k {
            return Err(Error::ShapeMismatch(format!(
                "theta_star is {}x{}, partition has {k} clusters",
                theta_star.nrows(),
                theta_star.ncols()
            )));
        }
        if gamma_star.len() != partition.d() {
            return Err(Error::ShapeMismatch(format!(
                "gamma_star has {} entries, partition covers {} variables",
                gamma_star.len(),
                partition.d()
            )));
        }
        check_symmetric(&theta_star, "theta_star")?;
        partition.require_no_singletons()?;
        if let Some(j) = gamma_star.iter().position(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "noise variance gamma_star[{j}] = {} must be positive",
                gamma_star[j]
            )));
        }
        let lmin = lambda_min(&theta_star);
        if lmin <= PD_TOLERANCE {
            return Err(Error::NonPositiveDefinite { lambda_min: lmin });
        }

        let c_star = spd_inverse(&theta_star)?;
        let c_chol = c_star
            .clone()
            .cholesky()
            .ok_or(Error::CholeskyFailure)?
            .unpack();

        let a = partition.membership_matrix();
        let mut sigma_star = &a * &c_star * a.transpose();
        for j in 0..partition.d() {
            sigma_star[(j, j)] += gamma_star[j];
        }

        let mut s_star = c_star.clone();
        for kk in 0..k {
            let members = partition.members(kk);
            let size = members.len() as f64;
            let noise: f64 = members.iter().map(|&j| gamma_star[j]).sum();
            s_star[(kk, kk)] += noise / (size * size);
        }
        let omega_star = spd_inverse(&s_star)?;

        Ok(LatentModel {
            partition,
            theta_star,
            gamma_star,
            c_star,
            c_chol,
            sigma_star,
            s_star,
            omega_star,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }
    pub fn theta_star(&self) -> &DMatrix<f64> {
        &self.theta_star
    }
    pub fn gamma_star(&self) -> &DVector<f64> {
        &self.gamma_star
    }
    pub fn c_star(&self) -> &DMatrix<f64> {
        &self.c_star
    }
    pub fn sigma_star(&self) -> &DMatrix<f64> {
        &self.sigma_star
    }
    pub fn s_star(&self) -> &DMatrix<f64> {
        &self.s_star
    }
    pub fn omega_star(&self) -> &DMatrix<f64> {
        &self.omega_star
    }
    pub fn k(&self) -> usize {
        self.partition.k()
    }
    pub fn d(&self) -> usize {
        self.partition.d()
    }

    /// Draws `n` i.i.d. rows of `X = AZ + E`, `Z ~ N(0, C*)`, `E ~ N(0, Γ*)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleMatrix> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 observations, got {n}"
            )));
        }
        let (d, k) = (self.d(), self.k());
        let mut rng = rng::stream(seed, rng::STREAM_SAMPLE);
        let noise_sd: Vec<f64> = self.gamma_star.iter().map(|g| g.sqrt()).collect();
        let labels = self.partition.labels();
        let mut xi = vec![0.0; k];
        let mut z = vec![0.0; k];
        let mut data = DMatrix::zeros(n, d);
        for i in 0..n {
            for v in xi.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            for (r, zr) in z.iter_mut().enumerate() {
                *zr = (0..=r).map(|c| self.c_chol[(r, c)] * xi[c]).sum();
            }
            for j in 0..d {
                let e: f64 = rng.sample(StandardNormal);
                data[(i, j)] = z[labels[j]] + noise_sd[j] * e;
            }
        }
        SampleMatrix::new(data)
    }
}

/// Convenience alias matching the operation name.
pub fn build_model(
    partition: Partition,
    theta_star: DMatrix<f64>,
    gamma_star: DVector<f64>,
) -> Result<LatentModel> {
    LatentModel::new(partition, theta_star, gamma_star)
}

/// Row-wise within-cluster means: column `k` averages the columns in `G_k`.
pub fn cluster_averages(x: &SampleMatrix, partition: &Partition) -> Result<DMatrix<f64>> {
    if x.d() != partition.d() {
        return Err(Error::ShapeMismatch(format!(
            "data has {} columns, partition covers {}",
            x.d(),
            partition.d()
        )));
    }
    let data = x.data();
    let mut out = DMatrix::zeros(x.n(), partition.k());
    for k in 0..partition.k() {
        let members = partition.members(k);
        let inv = 1.0 / members.len() as f64;
        let mut col = out.column_mut(k);
        for &j in members {
            col.axpy(inv, &data.column(j), 1.0);
        }
    }
    Ok(out)
}
