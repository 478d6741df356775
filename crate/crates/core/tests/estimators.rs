use clustergraph::clustering::{estimate_gamma_tilde, sample_covariance};
use clustergraph::covariance::gamma_hat;
use clustergraph::graph::{gen_hub, ground_truth, precision_from_adjacency, Topology, AVERAGE_SUPPORT_THRESHOLD};
use clustergraph::harness::{replication_model, ExperimentConfig};
use clustergraph::inference::{
    clime_column, default_lambda, infer_from_matrix, infer_graph, moment_matrix, nuisance_projection,
};
use clustergraph::{build_model, Execution, GraphKind, LatentModel, Partition};
use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

mod common;
use common::l1_box_oracle;

type Q = BigRational;

fn to_q(m: &DMatrix<f64>) -> Vec<Vec<Q>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| Q::from_float(m[(i, j)]).unwrap()).collect())
        .collect()
}

/// Exact Gauss-Jordan inverse over the rationals.
fn inverse_q(a: &[Vec<Q>]) -> Vec<Vec<Q>> {
    let n = a.len();
    let mut aug: Vec<Vec<Q>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { Q::from_integer(1.into()) } else { Q::zero() }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !aug[r][col].is_zero()).expect("singular");
        aug.swap(col, pivot);
        let p = aug[col][col].clone();
        for v in aug[col].iter_mut() {
            *v = &*v / &p;
        }
        for r in 0..n {
            if r != col && !aug[r][col].is_zero() {
                let f = aug[r][col].clone();
                for c in 0..2 * n {
                    let delta = &f * &aug[col][c];
                    aug[r][c] = &aug[r][c] - delta;
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

#[test]
fn hub_average_graph_matches_rational_inverse() {
    let (k, m) = (10, 5);
    let theta = precision_from_adjacency(&gen_hub(k, 5).unwrap(), 0.3).unwrap();
    let gamma = DVector::from_element(k * m, 0.3);
    let model = build_model(Partition::round_robin(k * m, k).unwrap(), theta.clone(), gamma).unwrap();

    let c = inverse_q(&to_q(&theta));
    let gbar = Q::from_float(0.3).unwrap() * Q::from_integer(m.into()) / Q::from_integer((m * m).into());
    let mut s = c;
    for (i, row) in s.iter_mut().enumerate() {
        row[i] = &row[i] + &gbar;
    }
    let omega = inverse_q(&s);

    let truth = ground_truth(&model);
    for t in 0..k {
        for j in 0..k {
            let exact = omega[t][j].to_f64().unwrap();
            assert!((model.omega_star()[(t, j)] - exact).abs() < 1e-10, "({t},{j})");
            if t < j {
                assert_eq!(truth.average_edges.contains(&(t, j)), exact.abs() > AVERAGE_SUPPORT_THRESHOLD);
            }
        }
    }
    // the hub structure survives in the average graph
    for e in &truth.latent_edges {
        assert!(truth.average_edges.contains(e));
    }
}

fn config(d: usize, n: usize, k: usize) -> ExperimentConfig {
    ExperimentConfig::new(d, n, k, Topology::Band3)
}

#[test]
fn gamma_tilde_sanity_over_seeds() {
    let cfg = config(40, 2000, 8);
    for seed in 0..20 {
        let model = replication_model(&cfg, seed).unwrap();
        let x = model.sample(cfg.n, 100 + seed).unwrap();
        let gt = estimate_gamma_tilde(&sample_covariance(&x), Execution::Parallel).unwrap();
        let g = model.gamma_star();
        let bound = 0.5 * g.max();
        let err = gt.diag.iter().zip(g.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= bound, "seed {seed}: {err} > {bound}");
    }
}

#[test]
fn gamma_hat_accuracy_over_seeds() {
    let cfg = config(40, 5000, 8);
    for seed in 0..20 {
        let model = replication_model(&cfg, seed).unwrap();
        let x = model.sample(cfg.n, 200 + seed).unwrap();
        let g = gamma_hat(&x, model.partition()).unwrap();
        let err = (g - model.gamma_star()).amax();
        assert!(err < 0.1, "seed {seed}: {err}");
    }
}

#[test]
fn three_dimensional_programs_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let b = DMatrix::from_fn(5, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let m = b.transpose() * b / 5.0 + DMatrix::identity(3, 3) * 0.1;
        for k in 0..3 {
            let col = clime_column(&m, k, 0.05).unwrap();
            let mut e = DVector::zeros(3);
            e[k] = 1.0;
            let oracle = l1_box_oracle(&m, &e, 0.05).unwrap();
            assert!((col.beta.lp_norm(1) - oracle).abs() < 1e-5);
            assert!((&m * &col.beta - &e).amax() <= 0.05 + 1e-5);

            let proj = nuisance_projection(&m, k, 0.05).unwrap();
            let others: Vec<usize> = (0..3).filter(|&j| j != k).collect();
            let a = m.select_rows(&others).select_columns(&others);
            let rhs = DVector::from_fn(2, |r, _| m[(others[r], k)]);
            let oracle = l1_box_oracle(&a, &rhs, 0.05).unwrap();
            assert!((proj.w.lp_norm(1) - oracle).abs() < 1e-5);
        }
    }
}

fn monte_carlo<T: Send, F: Fn(u64) -> T + Sync>(reps: usize, f: F) -> Vec<T> {
    Execution::Parallel.map(reps, |r| f(r as u64))
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn band_model(d: usize, k: usize) -> LatentModel {
    replication_model(&config(d, 2, k), 5).unwrap()
}

/// One-step estimates of `Ω*_tj` over 200 samples, and the mean initial
/// (CLIME) estimate.
fn average_estimates(model: &LatentModel, n: usize, lambda: f64, (t, j): (usize, usize)) -> (Vec<f64>, f64) {
    let pairs = monte_carlo(200, |s| {
        let x = model.sample(n, 1000 + s).unwrap();
        let m_hat = moment_matrix(&x, model.partition(), GraphKind::Average).unwrap();
        let gi = infer_from_matrix(&m_hat, n, GraphKind::Average, lambda, lambda, Execution::Sequential).unwrap();
        let e = gi.edges.iter().find(|e| e.t == t && e.k == j).unwrap();
        (e.estimate, clime_column(&m_hat, j, lambda).unwrap().beta[t])
    });
    let est = pairs.iter().map(|p| p.0).collect();
    let init = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
    (est, init)
}

#[test]
fn one_step_average_estimates_are_centered() {
    let (n, k) = (2000, 10);
    let model = band_model(40, k);
    let lambda = default_lambda(k, n);
    // the regularization remainder of a true edge is of order λ², so the
    // non-null entry is checked at a tenth of the default
    for (edge, lam) in [((0, 9), lambda), ((0, 1), 0.1 * lambda)] {
        let (est, _) = average_estimates(&model, n, lam, edge);
        let (mean, se) = mean_and_se(&est);
        let truth = model.omega_star()[edge];
        assert!((mean - truth).abs() <= 3.0 * se, "{edge:?}: mean {mean}, truth {truth}, se {se}");
    }
}

#[test]
fn one_step_reduces_initial_bias() {
    let (n, k) = (2000, 10);
    let model = band_model(40, k);
    let truth = model.omega_star()[(0, 1)];
    let mut last = f64::INFINITY;
    for mult in [1.0, 0.5, 0.25] {
        let (est, init) = average_estimates(&model, n, mult * default_lambda(k, n), (0, 1));
        let bias = (mean_and_se(&est).0 - truth).abs();
        assert!(bias < (init - truth).abs(), "λ × {mult}: one-step bias {bias}, initial {init}");
        assert!(bias < last, "bias does not shrink with λ");
        last = bias;
    }
}

#[test]
fn null_edge_coverage() {
    let (n, k) = (800, 10);
    let model = band_model(40, k);
    let lambda = default_lambda(k, n);
    for kind in [GraphKind::Latent, GraphKind::Average] {
        let covered = monte_carlo(200, |s| {
            let x = model.sample(n, 5000 + s).unwrap();
            let gi = infer_graph(&x, model.partition(), kind, lambda, lambda, Execution::Sequential).unwrap();
            let e = gi.edges.iter().find(|e| e.t == 0 && e.k == 9).unwrap();
            f64::from(e.stat.abs() < 1.959964)
        });
        let rate = covered.iter().sum::<f64>() / 200.0;
        assert!((0.91..=0.99).contains(&rate), "{kind}: coverage {rate}");
    }
}
