//! Estimation and FDR-controlled recovery of cluster-based Gaussian
//! graphical models.
//!
//! Observed variables follow the G-block model `X = AZ + E`: each variable
//! loads on exactly one latent coordinate of `Z ~ N(0, C*)` plus independent
//! noise. Two graphs are of interest, the latent graph (support of
//! `Θ* = C*⁻¹`) and the cluster-average graph (support of `Ω* = S*⁻¹`).
//!
//! The pipeline is: cluster the variables ([`clustering`]), build the
//! second-moment matrices ([`covariance`]), compute one-step estimates and
//! test statistics per edge ([`inference`]), then select edges with FDR
//! control ([`fdr`]). [`harness`] reproduces the synthetic experiments.

pub mod clustering;
pub mod covariance;
pub mod error;
pub mod exec;
pub mod fdr;
pub mod graph;
pub mod harness;
pub mod inference;
pub mod model;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use exec::Execution;
pub use inference::GraphKind;
pub use model::{build_model, cluster_averages, LatentModel, Partition, SampleMatrix};
