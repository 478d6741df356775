//! Plug-in second-moment estimators for both graphs.
//!
//! `Ŝ` is the second-moment matrix of the estimated cluster averages. `Ĉ`
//! removes the noise contribution from the diagonal of `Ŝ` using the
//! leave-one-out within-cluster estimate `Γ̂`. All moments are uncentered.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{cluster_averages, Partition, SampleMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct AveragesCovariance {
    pub s_hat: DMatrix<f64>,
}

/// `Ĉ` together with the diagonal correction used to build it.
///
/// `gamma_hat` may have negative entries in finite samples; they are kept
/// as-is.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCovariance {
    pub c_hat: DMatrix<f64>,
    pub gamma_hat: DVector<f64>,
}

fn check_shape(d: usize, g: &Partition) -> Result<()> {
    if d != g.d() {
        return Err(Error::ShapeMismatch(format!(
            "data has {d} variables, partition covers {}",
            g.d()
        )));
    }
    Ok(())
}

pub fn averages_covariance(x: &SampleMatrix, g_hat: &Partition) -> Result<AveragesCovariance> {
    let avg = cluster_averages(x, g_hat)?;
    let mut s_hat = avg.tr_mul(&avg);
    s_hat /= x.n() as f64;
    Ok(AveragesCovariance { s_hat })
}

/// `B⁻¹AᵀΣAB⁻¹` with `B = AᵀA`: block means of a covariance matrix.
pub fn block_means(sigma: &DMatrix<f64>, g: &Partition) -> Result<DMatrix<f64>> {
    check_shape(sigma.nrows(), g)?;
    let k = g.k();
    Ok(DMatrix::from_fn(k, k, |r, c| {
        let (mr, mc) = (g.members(r), g.members(c));
        let sum: f64 = mr
            .iter()
            .flat_map(|&a| mc.iter().map(move |&b| sigma[(a, b)]))
            .sum();
        sum / (mr.len() * mc.len()) as f64
    }))
}

/// `Γ̂_aa = Σ̂_aa − (|G_k|−1)⁻¹ Σ_{j∈G_k, j≠a} Σ̂_aj` computed from a
/// covariance matrix.
pub fn gamma_hat_from_sigma(sigma: &DMatrix<f64>, g: &Partition) -> Result<DVector<f64>> {
    check_shape(sigma.nrows(), g)?;
    g.require_no_singletons()?;
    Ok(DVector::from_fn(g.d(), |a, _| {
        let members = g.members(g.label(a));
        let others: f64 = members.iter().filter(|&&j| j != a).map(|&j| sigma[(a, j)]).sum();
        sigma[(a, a)] - others / (members.len() - 1) as f64
    }))
}

pub fn gamma_hat(x: &SampleMatrix, g_hat: &Partition) -> Result<DVector<f64>> {
    check_shape(x.d(), g_hat)?;
    g_hat.require_no_singletons()?;
    let avg = cluster_averages(x, g_hat)?;
    Ok(gamma_hat_with_averages(x, g_hat, &avg))
}

// Σ_{j∈G_k} Σ̂_aj = |G_k| · n⁻¹ Σᵢ X_ia X̄_ik, so only O(nd) work is needed.
fn gamma_hat_with_averages(x: &SampleMatrix, g: &Partition, avg: &DMatrix<f64>) -> DVector<f64> {
    let data = x.data();
    let n = x.n() as f64;
    DVector::from_fn(g.d(), |a, _| {
        let k = g.label(a);
        let size = g.members(k).len() as f64;
        let col = data.column(a);
        let own = col.dot(&col) / n;
        let block = size * col.dot(&avg.column(k)) / n;
        own - (block - own) / (size - 1.0)
    })
}

fn subtract_noise(mut s: DMatrix<f64>, gamma: &DVector<f64>, g: &Partition) -> DMatrix<f64> {
    for k in 0..g.k() {
        let members = g.members(k);
        let size = members.len() as f64;
        let noise: f64 = members.iter().map(|&a| gamma[a]).sum();
        s[(k, k)] -= noise / (size * size);
    }
    s
}

pub fn latent_covariance(x: &SampleMatrix, g_hat: &Partition) -> Result<LatentCovariance> {
    check_shape(x.d(), g_hat)?;
    g_hat.require_no_singletons()?;
    let avg = cluster_averages(x, g_hat)?;
    let gamma = gamma_hat_with_averages(x, g_hat, &avg);
    let mut s_hat = avg.tr_mul(&avg);
    s_hat /= x.n() as f64;
    Ok(LatentCovariance {
        c_hat: subtract_noise(s_hat, &gamma, g_hat),
        gamma_hat: gamma,
    })
}

/// `Ĉ` from a covariance matrix; on `Σ*` with the true partition this is `C*`.
pub fn latent_covariance_from_sigma(sigma: &DMatrix<f64>, g: &Partition) -> Result<LatentCovariance> {
    let gamma = gamma_hat_from_sigma(sigma, g)?;
    let s = block_means(sigma, g)?;
    Ok(LatentCovariance {
        c_hat: subtract_noise(s, &gamma, g),
        gamma_hat: gamma,
    })
}

/// Single-observation version `C̄⁽ⁱ⁾` of the latent covariance.
pub fn per_sample_latent(row: &[f64], g: &Partition) -> Result<DMatrix<f64>> {
    check_shape(row.len(), g)?;
    g.require_no_singletons()?;
    let k = g.k();
    let mut avg = vec![0.0; k];
    for (kk, a) in avg.iter_mut().enumerate() {
        let members = g.members(kk);
        *a = members.iter().map(|&j| row[j]).sum::<f64>() / members.len() as f64;
    }
    let mut c = DMatrix::from_fn(k, k, |r, s| avg[r] * avg[s]);
    for kk in 0..k {
        let members = g.members(kk);
        let size = members.len() as f64;
        let block_sum = size * avg[kk];
        let noise: f64 = members
            .iter()
            .map(|&a| {
                let xa = row[a];
                xa * xa - xa * (block_sum - xa) / (size - 1.0)
            })
            .sum();
        c[(kk, kk)] -= noise / (size * size);
    }
    Ok(c)
}
