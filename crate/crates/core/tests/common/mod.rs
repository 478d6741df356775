//! Oracles shared by the integration tests.

use nalgebra::{DMatrix, DVector};

/// Brute-force `min ‖β‖₁ s.t. ‖Aβ − b‖∞ ≤ λ`: the optimum sits at a point
/// where `p` independent hyperplanes among `a_iᵀβ = b_i ± λ` and `β_j = 0`
/// are active, so enumerate all of them.
pub fn l1_box_oracle(a: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> Option<f64> {
    let (rows, p) = a.shape();
    let mut planes: Vec<(DVector<f64>, f64)> = Vec::new();
    for i in 0..rows {
        let ai = a.row(i).transpose();
        planes.push((ai.clone(), b[i] + lambda));
        planes.push((ai, b[i] - lambda));
    }
    for j in 0..p {
        let mut e = DVector::zeros(p);
        e[j] = 1.0;
        planes.push((e, 0.0));
    }
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..p).collect();
    loop {
        let m = DMatrix::from_fn(p, p, |r, c| planes[idx[r]].0[c]);
        let rhs = DVector::from_fn(p, |r, _| planes[idx[r]].1);
        if m.determinant().abs() > 1e-10 {
            if let Some(x) = m.lu().solve(&rhs) {
                let feasible = (a * &x - b).amax() <= lambda + 1e-9;
                if feasible {
                    let obj = x.lp_norm(1);
                    best = Some(best.map_or(obj, |v: f64| v.min(obj)));
                }
            }
        }
        // next combination
        let n = planes.len();
        let mut i = p;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] != i + n - p {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..p {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
