use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::inference::{clime_column, moment_matrix, nuisance_projection, GraphKind, Penalties};
use crate::model::{Partition, SampleMatrix};
use crate::rng;

/// Whether one λ is chosen for all columns or one per column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvScope {
    #[default]
    Global,
    PerColumn,
}

/// How λ′ is chosen: tied to λ, or selected on its own from the same grid
/// by the held-out risk of the projection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaPrimeMode {
    #[default]
    Tied,
    Separate,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CvOptions {
    pub scope: CvScope,
    pub lambda_prime: LambdaPrimeMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvChoice {
    pub penalties: Penalties,
    /// Mean held-out pseudo-risk of the columns per grid value (`+∞` where a
    /// fit failed).
    pub risks: Vec<f64>,
    /// Same for the projections; empty when λ′ is tied.
    pub projection_risks: Vec<f64>,
}

impl CvChoice {
    /// The chosen λ (the mean over columns for per-column choices).
    pub fn lambda(&self) -> f64 {
        self.penalties.means().0
    }

    pub fn lambda_prime(&self) -> f64 {
        self.penalties.means().1
    }
}

/// Multiples `{0.25, 0.5, 1, 1.5, 2, 3} · √(log(K ∨ n)/n)`.
pub fn default_grid(k: usize, n: usize) -> Vec<f64> {
    let base = ((k.max(n) as f64).ln() / n as f64).sqrt();
    [0.25, 0.5, 1.0, 1.5, 2.0, 3.0].iter().map(|c| c * base).collect()
}

fn splits(
    x: &SampleMatrix,
    g_hat: &Partition,
    kind: GraphKind,
    folds: usize,
    seed: u64,
) -> Result<Vec<(DMatrix<f64>, DMatrix<f64>)>> {
    let n = x.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, rng::STREAM_FOLDS));
    (0..folds)
        .map(|f| {
            let mut val: Vec<usize> = order.iter().copied().skip(f).step_by(folds).collect();
            let mut train: Vec<usize> =
                order.iter().enumerate().filter(|(i, _)| i % folds != f).map(|(_, &r)| r).collect();
            train.sort_unstable();
            val.sort_unstable();
            Ok((
                moment_matrix(&x.select_rows(&train)?, g_hat, kind)?,
                moment_matrix(&x.select_rows(&val)?, g_hat, kind)?,
            ))
        })
        .collect()
}

/// `½ βᵀ M_val β − β_k`.
fn column_risk(m_val: &DMatrix<f64>, beta: &nalgebra::DVector<f64>, k: usize) -> f64 {
    0.5 * beta.dot(&(m_val * beta)) - beta[k]
}

/// Held-out risk of a projection: `½ vᵀ M_val v` with `v = (1, −w)`, the
/// residual variance of row `t` given the others.
fn projection_risk(m_val: &DMatrix<f64>, v: &nalgebra::DVector<f64>) -> f64 {
    0.5 * v.dot(&(m_val * v))
}

/// Index-by-grid table of risks summed over folds.
fn risk_table(
    splits: &[(DMatrix<f64>, DMatrix<f64>)],
    dim: usize,
    grid: &[f64],
    exec: Execution,
    fit: impl Fn(&DMatrix<f64>, &DMatrix<f64>, usize, f64) -> Option<f64> + Sync,
) -> Vec<Vec<f64>> {
    let by_grid = exec.map(grid.len(), |gi| {
        (0..dim)
            .map(|j| {
                splits
                    .iter()
                    .map(|(tr, va)| fit(tr, va, j, grid[gi]).unwrap_or(f64::INFINITY))
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
    });
    (0..dim).map(|j| by_grid.iter().map(|row| row[j]).collect()).collect()
}

fn argmin(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_finite())
        .fold((None, f64::INFINITY), |acc, (i, &r)| if r < acc.1 { (Some(i), r) } else { acc })
        .0
}

/// Per-index choices from a risk table, plus the mean risk per grid value.
fn choose(table: &[Vec<f64>], grid: &[f64], scope: CvScope, folds: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = table.len();
    let mean: Vec<f64> = (0..grid.len())
        .map(|gi| table.iter().map(|row| row[gi]).sum::<f64>() / (dim * folds) as f64)
        .collect();
    let chosen = match scope {
        CvScope::Global => vec![grid[argmin(&mean).ok_or(Error::Infeasible)?]; dim],
        CvScope::PerColumn => table
            .iter()
            .map(|row| argmin(row).map(|i| grid[i]).ok_or(Error::Infeasible))
            .collect::<Result<_>>()?,
    };
    Ok((chosen, mean))
}

/// K-fold cross-validation of λ on the held-out pseudo-risk
/// `½ βᵀ M̂_val β − β_k`, averaged over columns and folds, with λ′ = λ.
pub fn cross_validate(
    x: &SampleMatrix,
    g_hat: &Partition,
    kind: GraphKind,
    folds: usize,
    grid: &[f64],
    seed: u64,
    exec: Execution,
) -> Result<CvChoice> {
    cross_validate_with(x, g_hat, kind, folds, grid, seed, CvOptions::default(), exec)
}

#[allow(clippy::too_many_arguments)]
pub fn cross_validate_with(
    x: &SampleMatrix,
    g_hat: &Partition,
    kind: GraphKind,
    folds: usize,
    grid: &[f64],
    seed: u64,
    options: CvOptions,
    exec: Execution,
) -> Result<CvChoice> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let n = x.n();
    if folds < 2 || 2 * folds > n {
        return Err(Error::InvalidArgument(format!("{folds} folds for {n} observations")));
    }
    let splits = splits(x, g_hat, kind, folds, seed)?;
    let dim = g_hat.k();

    let columns = risk_table(&splits, dim, grid, exec, |tr, va, k, l| {
        clime_column(tr, k, l).ok().map(|c| column_risk(va, &c.beta, k))
    });
    let (lambda, risks) = choose(&columns, grid, options.scope, folds)?;

    let (lambda_prime, projection_risks) = match options.lambda_prime {
        LambdaPrimeMode::Tied => (lambda.clone(), Vec::new()),
        LambdaPrimeMode::Separate => {
            let rows = risk_table(&splits, dim, grid, exec, |tr, va, t, l| {
                nuisance_projection(tr, t, l).ok().map(|p| projection_risk(va, &p.v))
            });
            choose(&rows, grid, options.scope, folds)?
        }
    };
    Ok(CvChoice {
        penalties: Penalties { lambda, lambda_prime },
        risks,
        projection_risks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_band, precision_from_adjacency};
    use crate::model::build_model;
    use nalgebra::DVector;

    fn data(n: usize, seed: u64) -> (SampleMatrix, Partition) {
        let theta = precision_from_adjacency(&gen_band(6, 1).unwrap(), 0.3).unwrap();
        let p = Partition::round_robin(24, 6).unwrap();
        let m = build_model(p.clone(), theta, DVector::from_element(24, 0.3)).unwrap();
        (m.sample(n, seed).unwrap(), p)
    }

    #[test]
    fn single_value_grid() {
        let (x, p) = data(200, 1);
        let c = cross_validate(&x, &p, GraphKind::Average, 5, &[0.07], 3, Execution::Sequential).unwrap();
        assert_eq!(c.penalties, Penalties::uniform(6, 0.07, 0.07));
        assert!(matches!(
            cross_validate(&x, &p, GraphKind::Average, 5, &[], 3, Execution::Sequential),
            Err(Error::EmptyGrid)
        ));
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, p) = data(300, 2);
        let grid = default_grid(6, 300);
        let a = cross_validate(&x, &p, GraphKind::Latent, 5, &grid, 9, Execution::Sequential).unwrap();
        let b = cross_validate(&x, &p, GraphKind::Latent, 5, &grid, 9, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn choice_is_on_the_theoretical_scale() {
        let (x, p) = data(4000, 3);
        let base = ((4000f64).ln() / 4000.0).sqrt();
        let grid: Vec<f64> = [0.01, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0].iter().map(|c| c * base).collect();
        let c = cross_validate(&x, &p, GraphKind::Average, 5, &grid, 1, Execution::Sequential).unwrap();
        let l = c.lambda();
        assert!(l >= 0.01 * base && l <= 3.0 * base, "chose {}", l / base);
        // heavy over-regularization is worse than the chosen value
        assert!(c.risks.last().unwrap() > &c.risks.iter().cloned().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn per_column_and_separate_modes() {
        let (x, p) = data(600, 4);
        let grid = default_grid(6, 600);
        let global = cross_validate(&x, &p, GraphKind::Latent, 4, &grid, 2, Execution::Sequential).unwrap();
        let opts = CvOptions {
            scope: CvScope::PerColumn,
            lambda_prime: LambdaPrimeMode::Separate,
        };
        let c = cross_validate_with(&x, &p, GraphKind::Latent, 4, &grid, 2, opts, Execution::Parallel).unwrap();
        assert_eq!(c.risks, global.risks);
        assert_eq!(c.projection_risks.len(), grid.len());
        assert!(c.penalties.lambda.iter().chain(&c.penalties.lambda_prime).all(|l| grid.contains(l)));
        // a per-column choice never has a larger summed risk than the global one
        let tbl = risk_table(&splits(&x, &p, GraphKind::Latent, 4, 2).unwrap(), 6, &grid, Execution::Sequential, |tr, va, k, l| {
            clime_column(tr, k, l).ok().map(|c| column_risk(va, &c.beta, k))
        });
        let sum = |choice: &[f64]| -> f64 {
            (0..6).map(|k| tbl[k][grid.iter().position(|g| *g == choice[k]).unwrap()]).sum()
        };
        assert!(sum(&c.penalties.lambda) <= sum(&global.penalties.lambda) + 1e-12);
    }
}
