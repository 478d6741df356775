//! Standard normal distribution helpers and a one-sample Kolmogorov–Smirnov
//! test.

use libm::erfc;

use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile: Acklam's rational approximation followed by a
/// Halley refinement step against [`phi`].
pub fn phi_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DomainError(p));
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.38357751867269e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };
    // upper-tail residual avoids cancellation in 1 − p near 1
    let e = if x > 0.0 {
        (1.0 - p) - 0.5 * erfc(x / std::f64::consts::SQRT_2)
    } else {
        phi(x) - p
    };
    let u = e / density(x);
    x -= u / (1.0 + 0.5 * x * u);
    Ok(x)
}

/// Two-sided one-sample KS statistic `sup |F_n − F|`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs: Vec<f64> = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0f64, |acc, (i, &x)| {
        let f = cdf(x);
        let lo = f - i as f64 / n;
        let hi = (i + 1) as f64 / n - f;
        acc.max(lo).max(hi)
    })
}

/// Asymptotic Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = (-2.0 * j * j * x * x).exp();
        sum += if (j as i64) % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// KS test of `sample` against `N(0, 1)`: returns `(D, p-value)`, using
/// Stephens' finite-sample scaling `(√n + 0.12 + 0.11/√n)·D`.
pub fn ks_test_normal(sample: &[f64]) -> (f64, f64) {
    let d = ks_statistic(sample, phi);
    let sn = (sample.len() as f64).sqrt();
    (d, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn quantile_values() {
        assert_eq!(phi_inv(0.5).unwrap(), 0.0);
        assert!((phi_inv(0.975).unwrap() - 1.959963984540054).abs() < 1e-12);
        assert!((phi_inv(0.025).unwrap() + 1.959963984540054).abs() < 1e-12);
        assert!((phi_inv(1e-10).unwrap() + 6.361340902404056).abs() < 1e-9);
        assert!(matches!(phi_inv(0.0), Err(Error::DomainError(_))));
        assert!(phi_inv(1.0).is_err());
        assert!(phi_inv(f64::NAN).is_err());
    }

    #[test]
    fn round_trip_grid() {
        let reference = Normal::standard();
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let x = phi_inv(p).unwrap();
            assert!((phi(x) - p).abs() <= 1e-10, "p = {p}");
            assert!((x - reference.inverse_cdf(p)).abs() < 1e-8);
        }
        for p in [1e-12, 1e-8, 1e-5, 1.0 - 1e-5, 1.0 - 1e-9] {
            let x = phi_inv(p).unwrap();
            assert!(((phi(x) - p) / p.min(1.0 - p)).abs() < 1e-8);
        }
    }

    #[test]
    fn kolmogorov_reference_points() {
        // P(K > 1.3581) ≈ 0.05, P(K > 1.6276) ≈ 0.01
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn ks_detects_shift() {
        let grid: Vec<f64> = (1..500).map(|i| phi_inv(i as f64 / 500.0).unwrap()).collect();
        let (_, p) = ks_test_normal(&grid);
        assert!(p > 0.99);
        let shifted: Vec<f64> = grid.iter().map(|x| x + 0.5).collect();
        let (_, p) = ks_test_normal(&shifted);
        assert!(p < 1e-6);
    }
}
