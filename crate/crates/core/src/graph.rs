//! Synthetic graph topologies for the latent precision matrix, and the
//! ground-truth edge sets of the latent and cluster-average graphs.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{lambda_min, LatentModel, PD_TOLERANCE};
use crate::rng;

/// Entries of Ω* with magnitude at or below this are structural zeros.
pub const AVERAGE_SUPPORT_THRESHOLD: f64 = 1e-8;

/// Undirected, unweighted, loop-free graph on `K` nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    k: usize,
    adj: Vec<bool>,
    edge_count: usize,
}

impl AdjacencyMatrix {
    pub fn empty(k: usize) -> Self {
        AdjacencyMatrix {
            k,
            adj: vec![false; k * k],
            edge_count: 0,
        }
    }

    pub fn add_edge(&mut self, i: usize, j: usize) {
        assert!(i != j && i < self.k && j < self.k, "bad edge ({i}, {j})");
        if !self.adj[i * self.k + j] {
            self.adj[i * self.k + j] = true;
            self.adj[j * self.k + i] = true;
            self.edge_count += 1;
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.k + j]
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.k).filter(|&j| self.has_edge(i, j)).count()
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count);
        for i in 0..self.k {
            for j in i + 1..self.k {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.k, self.k, |i, j| {
            if self.has_edge(i, j) {
                1.0
            } else {
                0.0
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    #[serde(alias = "scale-free", alias = "scale_free")]
    ScaleFree,
    Hub,
    Band3,
}

impl std::str::FromStr for Topology {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scalefree" | "scale-free" | "scale_free" => Ok(Topology::ScaleFree),
            "hub" => Ok(Topology::Hub),
            "band3" | "band" => Ok(Topology::Band3),
            other => Err(Error::Config(format!("unknown topology `{other}`"))),
        }
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Topology::ScaleFree => "scalefree",
            Topology::Hub => "hub",
            Topology::Band3 => "band3",
        })
    }
}

/// Preferential attachment from a two-node chain: node `t` links to one
/// earlier node `i` with probability `deg(i) / Σ deg`. Produces a tree with
/// `K - 1` edges.
pub fn gen_scale_free(k: usize, seed: u64) -> Result<AdjacencyMatrix> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("scale-free graph needs K >= 2, got {k}")));
    }
    let mut rng = rng::stream(seed, rng::STREAM_GRAPH);
    let mut w = AdjacencyMatrix::empty(k);
    let mut degree = vec![0usize; k];
    w.add_edge(0, 1);
    degree[0] = 1;
    degree[1] = 1;
    for t in 2..k {
        let total: usize = degree[..t].iter().sum();
        let u = rng.random::<f64>() * total as f64;
        let mut acc = 0.0;
        let mut target = t - 1;
        for (i, &deg) in degree[..t].iter().enumerate() {
            acc += deg as f64;
            if u < acc {
                target = i;
                break;
            }
        }
        w.add_edge(t, target);
        degree[t] += 1;
        degree[target] += 1;
    }
    Ok(w)
}

/// Contiguous groups of `group_size` nodes; the first node of each group is
/// connected to every other member.
pub fn gen_hub(k: usize, group_size: usize) -> Result<AdjacencyMatrix> {
    if group_size < 2 {
        return Err(Error::InvalidArgument(format!("group size must be >= 2, got {group_size}")));
    }
    if !k.is_multiple_of(group_size) {
        return Err(Error::IndivisibleK { k, group_size });
    }
    let mut w = AdjacencyMatrix::empty(k);
    for start in (0..k).step_by(group_size) {
        for j in start + 1..start + group_size {
            w.add_edge(start, j);
        }
    }
    Ok(w)
}

/// Toeplitz band graph: `i ~ j` iff `0 < |i - j| <= bandwidth`.
pub fn gen_band(k: usize, bandwidth: usize) -> Result<AdjacencyMatrix> {
    if bandwidth == 0 || bandwidth >= k {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must satisfy 1 <= B < K, got B={bandwidth}, K={k}"
        )));
    }
    let mut w = AdjacencyMatrix::empty(k);
    for i in 0..k {
        for j in i + 1..=(i + bandwidth).min(k - 1) {
            w.add_edge(i, j);
        }
    }
    Ok(w)
}

/// Group size used for hub graphs: 5 when it divides `K`, else 6.
pub fn hub_group_size(k: usize) -> Result<usize> {
    [5, 6]
        .into_iter()
        .find(|n| k.is_multiple_of(*n))
        .ok_or(Error::IndivisibleK { k, group_size: 5 })
}

pub fn generate(topology: Topology, k: usize, seed: u64) -> Result<AdjacencyMatrix> {
    match topology {
        Topology::ScaleFree => gen_scale_free(k, seed),
        Topology::Hub => gen_hub(k, hub_group_size(k)?),
        Topology::Band3 => gen_band(k, 3),
    }
}

/// `Θ* = cW + (|λmin(W)| + 0.2) I`, verified positive definite.
pub fn precision_from_adjacency(w: &AdjacencyMatrix, c: f64) -> Result<DMatrix<f64>> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("signal strength must be positive, got {c}")));
    }
    let wm = w.to_matrix();
    let shift = lambda_min(&wm).abs() + 0.2;
    let theta = &wm * c + DMatrix::identity(w.k(), w.k()) * shift;
    let lmin = lambda_min(&theta);
    if lmin <= PD_TOLERANCE {
        return Err(Error::NonPositiveDefinite { lambda_min: lmin });
    }
    Ok(theta)
}

/// Support of Θ* (latent graph) and of Ω* thresholded at 1e-8 (average graph).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthEdges {
    pub latent_edges: BTreeSet<(usize, usize)>,
    pub average_edges: BTreeSet<(usize, usize)>,
}

pub fn ground_truth(model: &LatentModel) -> GroundTruthEdges {
    let k = model.k();
    let (theta, omega) = (model.theta_star(), model.omega_star());
    let mut latent_edges = BTreeSet::new();
    let mut average_edges = BTreeSet::new();
    for t in 0..k {
        for s in t + 1..k {
            if theta[(t, s)] != 0.0 {
                latent_edges.insert((t, s));
            }
            if omega[(t, s)].abs() > AVERAGE_SUPPORT_THRESHOLD {
                average_edges.insert((t, s));
            }
        }
    }
    GroundTruthEdges {
        latent_edges,
        average_edges,
    }
}
