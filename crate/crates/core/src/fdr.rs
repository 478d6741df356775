//! Edge selection with false-discovery-rate control.
//!
//! With `|H|` hypotheses and statistics sorted as `w₍₁₎ ≥ … ≥ w₍|H|₎`, the
//! cutoff is `τ̂ = q_r*` where `q_r = Φ⁻¹(1 − αr / (2N|H|))` and `r*` is the
//! largest `r` with `w₍ᵣ₎ ≥ q_r`. `N = Σ_{i≤|H|} 1/i` for Benjamini–Yekutieli
//! and `N = 1` for Benjamini–Hochberg. Exactly the top `r*` statistics are
//! rejected.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GroundTruthEdges;
use crate::inference::{EdgeInference, GraphKind};
use crate::stats::phi_inv;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FdrMethod {
    #[serde(rename = "BY", alias = "by")]
    BenjaminiYekutieli,
    #[serde(rename = "BH", alias = "bh")]
    BenjaminiHochberg,
}

impl std::fmt::Display for FdrMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FdrMethod::BenjaminiYekutieli => "BY",
            FdrMethod::BenjaminiHochberg => "BH",
        })
    }
}

impl std::str::FromStr for FdrMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "by" => Ok(FdrMethod::BenjaminiYekutieli),
            "bh" => Ok(FdrMethod::BenjaminiHochberg),
            other => Err(Error::Config(format!("unknown FDR method `{other}`"))),
        }
    }
}

/// Harmonic number `Σ_{i=1}^{h} 1/i`.
pub fn harmonic(h: usize) -> f64 {
    (1..=h).map(|i| 1.0 / i as f64).sum()
}

impl FdrMethod {
    pub fn inflation(self, hypotheses: usize) -> f64 {
        match self {
            FdrMethod::BenjaminiYekutieli => harmonic(hypotheses),
            FdrMethod::BenjaminiHochberg => 1.0,
        }
    }
}

/// `Φ⁻¹(1 − αr / (2N|H|))`; infinite for `r = 0`.
pub fn rejection_quantile(alpha: f64, r: usize, inflation: f64, hypotheses: usize) -> f64 {
    if r == 0 {
        return f64::INFINITY;
    }
    let p = 1.0 - alpha * r as f64 / (2.0 * inflation * hypotheses as f64);
    phi_inv(p).unwrap_or(if p <= 0.0 { f64::NEG_INFINITY } else { f64::INFINITY })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdrReport {
    pub alpha: f64,
    pub method: FdrMethod,
    pub cutoff: f64,
    pub hypotheses: usize,
    pub n_rejections: usize,
    pub selected: BTreeSet<(usize, usize)>,
    pub empirical_fdr: Option<f64>,
    pub empirical_power: Option<f64>,
}

/// Step-up selection over absolute statistics. `NaN` entries count as
/// hypotheses and are never rejected.
///
/// Returns the number of rejections and the cutoff `q_r*`. With no
/// rejections the cutoff reported is `q_1`, the smallest one that a single
/// discovery would have had to reach.
pub fn step_up(abs_stats: &[f64], alpha: f64, method: FdrMethod) -> (usize, f64) {
    let h = abs_stats.len();
    if h == 0 {
        return (0, f64::INFINITY);
    }
    let mut sorted: Vec<f64> = abs_stats.iter().copied().filter(|v| !v.is_nan()).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let inflation = method.inflation(h);
    let mut r_star = 0;
    for (i, &w) in sorted.iter().enumerate() {
        let r = i + 1;
        if w >= rejection_quantile(alpha, r, inflation, h) {
            r_star = r;
        }
    }
    let cutoff = rejection_quantile(alpha, r_star.max(1), inflation, h);
    (r_star, cutoff)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("FDR level must be in (0, 1), got {alpha}")));
    }
    Ok(())
}

pub fn select(stats: &[EdgeInference], alpha: f64, method: FdrMethod) -> Result<FdrReport> {
    check_alpha(alpha)?;
    let abs: Vec<f64> = stats
        .iter()
        .map(|e| if e.is_valid() { e.stat.abs() } else { f64::NAN })
        .collect();
    let (r, cutoff) = step_up(&abs, alpha, method);
    let selected: BTreeSet<(usize, usize)> = if r == 0 {
        BTreeSet::new()
    } else {
        stats
            .iter()
            .zip(&abs)
            .filter(|(_, a)| **a >= cutoff)
            .map(|(e, _)| (e.t, e.k))
            .collect()
    };
    debug_assert_eq!(selected.len(), r);
    Ok(FdrReport {
        alpha,
        method,
        cutoff,
        hypotheses: stats.len(),
        n_rejections: selected.len(),
        selected,
        empirical_fdr: None,
        empirical_power: None,
    })
}

pub fn by_cutoff(stats: &[EdgeInference], alpha: f64) -> Result<FdrReport> {
    select(stats, alpha, FdrMethod::BenjaminiYekutieli)
}

pub fn bh_cutoff(stats: &[EdgeInference], alpha: f64) -> Result<FdrReport> {
    select(stats, alpha, FdrMethod::BenjaminiHochberg)
}

/// `(V / max(R, 1), |selected ∩ H₁| / |H₁|)`, power 0 when `H₁` is empty.
pub fn score_edges(selected: &BTreeSet<(usize, usize)>, true_edges: &BTreeSet<(usize, usize)>) -> (f64, f64) {
    let hits = selected.intersection(true_edges).count();
    let false_disc = selected.len() - hits;
    let fdr = false_disc as f64 / selected.len().max(1) as f64;
    let power = if true_edges.is_empty() {
        0.0
    } else {
        hits as f64 / true_edges.len() as f64
    };
    (fdr, power)
}

/// Fills in the empirical FDR and power of `report` against the truth for
/// `kind`, and returns them.
pub fn score(report: &mut FdrReport, truth: &GroundTruthEdges, kind: GraphKind) -> (f64, f64) {
    let edges = match kind {
        GraphKind::Latent => &truth.latent_edges,
        GraphKind::Average => &truth.average_edges,
    };
    let (fdr, power) = score_edges(&report.selected, edges);
    report.empirical_fdr = Some(fdr);
    report.empirical_power = Some(power);
    (fdr, power)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::EdgeStatus;

    fn edges(stats: &[f64]) -> Vec<EdgeInference> {
        stats
            .iter()
            .enumerate()
            .map(|(i, &s)| EdgeInference {
                t: i,
                k: i + 1,
                estimate: s,
                std: 1.0,
                stat: s,
                graph_kind: GraphKind::Average,
                status: if s.is_nan() { EdgeStatus::NonPositiveVariance } else { EdgeStatus::Ok },
            })
            .collect()
    }

    /// Largest r with w₍ᵣ₎ ≥ q_r, scanning every candidate r.
    fn oracle(abs: &[f64], alpha: f64, n: f64) -> usize {
        let h = abs.len();
        let mut s: Vec<f64> = abs.iter().copied().filter(|v| !v.is_nan()).collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        (0..=s.len())
            .filter(|&r| r == 0 || s[r - 1] >= phi_inv(1.0 - alpha * r as f64 / (2.0 * n * h as f64)).unwrap())
            .max()
            .unwrap()
    }

    #[test]
    fn harmonic_three() {
        assert!((harmonic(3) - 11.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn zero_statistics_reject_nothing() {
        let r = by_cutoff(&edges(&[0.0; 6]), 0.1).unwrap();
        assert_eq!(r.n_rejections, 0);
        assert!(r.selected.is_empty());
        assert!(r.cutoff > 0.0);
    }

    #[test]
    fn three_statistics() {
        let e = edges(&[10.0, -9.0, 0.5]);
        let by = by_cutoff(&e, 0.2).unwrap();
        assert_eq!(by.selected, [(0, 1), (1, 2)].into_iter().collect());
        assert_eq!(by.n_rejections, oracle(&[10., 9., 0.5], 0.2, 11.0 / 6.0));
        let bh = bh_cutoff(&e, 0.2).unwrap();
        assert_eq!(bh.n_rejections, oracle(&[10., 9., 0.5], 0.2, 1.0));
        assert_eq!(bh.n_rejections, 2);
    }

    #[test]
    fn single_hypothesis() {
        let r = bh_cutoff(&edges(&[3.0]), 0.05).unwrap();
        assert_eq!(r.n_rejections, 1);
        assert!((r.cutoff - 1.959963984540054).abs() < 1e-12);
        let r = bh_cutoff(&edges(&[1.9]), 0.05).unwrap();
        assert_eq!(r.n_rejections, 0);
    }

    #[test]
    fn nan_edges_count_but_never_reject() {
        let r = bh_cutoff(&edges(&[f64::NAN, 50.0]), 0.05).unwrap();
        assert_eq!(r.hypotheses, 2);
        assert_eq!(r.selected, [(1, 2)].into_iter().collect());
    }

    #[test]
    fn ties_kept_together() {
        let r = bh_cutoff(&edges(&[2.5, 2.5, 2.5, 0.1]), 0.2).unwrap();
        assert!(r.n_rejections == 0 || r.n_rejections == 3);
    }

    #[test]
    fn scoring() {
        let truth: BTreeSet<_> = [(0, 1), (1, 2), (2, 3), (3, 4)].into_iter().collect();
        assert_eq!(score_edges(&truth, &truth), (0.0, 1.0));
        assert_eq!(score_edges(&BTreeSet::new(), &truth), (0.0, 0.0));
        let sel: BTreeSet<_> = [(0, 1), (0, 4)].into_iter().collect();
        assert_eq!(score_edges(&sel, &truth), (0.5, 0.25));
        assert_eq!(score_edges(&sel, &BTreeSet::new()), (1.0, 0.0));
    }

    #[test]
    fn rejects_bad_alpha() {
        assert!(by_cutoff(&edges(&[1.0]), 0.0).is_err());
        assert!(by_cutoff(&edges(&[1.0]), 1.0).is_err());
    }
}
