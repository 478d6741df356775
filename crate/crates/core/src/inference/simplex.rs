//! Dense two-phase simplex for small linear programs
//! `min cᵀx  s.t.  Ax ≤ b, x ≥ 0`.
//!
//! The problems solved here have a few hundred columns at most and use a
//! full tableau. Pivoting uses Dantzig's rule and
//! falls back to Bland's rule after a run of degenerate pivots. The final
//! basis is re-solved against the original data with an LU factorization to
//! remove accumulated tableau round-off.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const COST_TOL: f64 = 1e-11;
const PIVOT_TOL: f64 = 1e-11;
const PHASE1_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;
const DEGENERATE_RUN: usize = 50;

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub pivots: usize,
}

struct Tableau {
    rows: usize,
    cols: usize,
    // (rows + 1) × (cols + 1), row-major; last row is the objective,
    // last column is the right-hand side.
    t: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let inv = 1.0 / self.t[pr * w + pc];
        for c in 0..w {
            self.t[pr * w + c] *= inv;
        }
        self.t[pr * w + pc] = 1.0;
        let pivot_row: Vec<f64> = self.t[pr * w..(pr + 1) * w].to_vec();
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.t[r * w + pc];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[r * w..(r + 1) * w];
            for (dst, &src) in row.iter_mut().zip(&pivot_row) {
                *dst -= f * src;
            }
            row[pc] = 0.0;
        }
        self.basis[pr] = pc;
        self.pivots += 1;
    }

    /// Sets the objective row to the reduced costs of `cost`.
    fn price(&mut self, cost: &[f64]) {
        let w = self.cols + 1;
        let obj = self.rows * w;
        for c in 0..w {
            self.t[obj + c] = if c < self.cols { cost[c] } else { 0.0 };
        }
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for c in 0..w {
                    self.t[obj + c] -= cb * self.t[r * w + c];
                }
            }
        }
    }

    /// Runs simplex iterations on the current objective row, never letting
    /// columns flagged in `blocked` enter.
    fn optimize(&mut self, blocked: &[bool]) -> Result<()> {
        let mut degenerate = 0usize;
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::NotConverged {
                    iterations: self.pivots,
                });
            }
            let bland = degenerate >= DEGENERATE_RUN;
            let mut enter = None;
            let mut best = -COST_TOL;
            for c in 0..self.cols {
                if blocked[c] {
                    continue;
                }
                let rc = self.at(self.rows, c);
                if rc < best {
                    enter = Some(c);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(pc) = enter else {
                return Ok(());
            };

            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(r).max(0.0) / a;
                let better = match leave {
                    None => true,
                    Some(lr) => {
                        if ratio < best_ratio - 1e-14 {
                            true
                        } else if ratio <= best_ratio + 1e-14 {
                            if bland {
                                self.basis[r] < self.basis[lr]
                            } else {
                                a > self.at(lr, pc)
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some(r);
                    best_ratio = best_ratio.min(ratio);
                }
            }
            // the objective is bounded below for every problem built here;
            // an unbounded ray signals numerical breakdown
            let Some(pr) = leave else {
                return Err(Error::NotConverged {
                    iterations: self.pivots,
                });
            };
            if best_ratio <= 1e-14 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(pr, pc);
        }
    }
}

/// Solves `min cᵀx  s.t.  Ax ≤ b, x ≥ 0`.
pub fn solve(c: &[f64], a: &DMatrix<f64>, b: &[f64]) -> Result<LpSolution> {
    let (m, n) = a.shape();
    assert_eq!(c.len(), n);
    assert_eq!(b.len(), m);
    let negative: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let n_art = negative.len();
    let cols = n + m + n_art;
    let w = cols + 1;
    let mut t = vec![0.0; (m + 1) * w];
    let mut basis = vec![0usize; m];
    let mut art = 0;
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i * w + j] = sign * a[(i, j)];
        }
        t[i * w + n + i] = sign;
        t[i * w + cols] = sign * b[i];
        if sign < 0.0 {
            t[i * w + n + m + art] = 1.0;
            basis[i] = n + m + art;
            art += 1;
        } else {
            basis[i] = n + i;
        }
    }
    let mut tab = Tableau {
        rows: m,
        cols,
        t,
        basis,
        pivots: 0,
    };

    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        for v in phase1.iter_mut().skip(n + m) {
            *v = 1.0;
        }
        tab.price(&phase1);
        tab.optimize(&vec![false; cols])?;
        let infeasibility = -tab.at(m, cols);
        let scale = 1.0 + b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if infeasibility > PHASE1_TOL * scale {
            return Err(Error::Infeasible);
        }
        // drive zero-level artificials out of the basis where possible
        for r in 0..m {
            if tab.basis[r] >= n + m {
                if let Some(pc) = (0..n + m).find(|&c| tab.at(r, c).abs() > 1e-9) {
                    tab.pivot(r, pc);
                }
            }
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(c);
    tab.price(&cost);
    let mut blocked = vec![false; cols];
    for v in blocked.iter_mut().skip(n + m) {
        *v = true;
    }
    tab.optimize(&blocked)?;

    let mut x = DVector::zeros(n);
    for r in 0..m {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.rhs(r).max(0.0);
        }
    }
    if let Some(polished) = polish(a, b, &tab.basis, n) {
        let viol = |x: &DVector<f64>| max_violation(a, b, x);
        if viol(&polished) <= viol(&x) + 1e-12 {
            x = polished;
        }
    }
    let objective = c.iter().zip(x.iter()).map(|(ci, xi)| ci * xi).sum();
    Ok(LpSolution {
        x,
        objective,
        pivots: tab.pivots,
    })
}

fn max_violation(a: &DMatrix<f64>, b: &[f64], x: &DVector<f64>) -> f64 {
    let ax = a * x;
    let row = (0..b.len()).fold(0.0f64, |acc, i| acc.max(ax[i] - b[i]));
    x.iter().fold(row, |acc, &v| acc.max(-v))
}

/// Re-solves `[A I] z = b` on the final basis.
fn polish(a: &DMatrix<f64>, b: &[f64], basis: &[usize], n: usize) -> Option<DVector<f64>> {
    let m = b.len();
    if basis.iter().any(|&j| j >= n + m) {
        return None;
    }
    let bm = DMatrix::from_fn(m, m, |i, r| {
        let j = basis[r];
        if j < n {
            a[(i, j)]
        } else if j - n == i {
            1.0
        } else {
            0.0
        }
    });
    let z = bm.lu().solve(&DVector::from_column_slice(b))?;
    if z.iter().any(|v| !v.is_finite() || *v < -1e-9) {
        return None;
    }
    let mut x = DVector::zeros(n);
    for (r, &j) in basis.iter().enumerate() {
        if j < n {
            x[j] = z[r].max(0.0);
        }
    }
    Some(x)
}
