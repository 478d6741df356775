use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (smallest eigenvalue {lambda_min:.3e})")]
    NonPositiveDefinite { lambda_min: f64 },
    #[error("cluster {cluster} has a single member; at least two are required")]
    SingletonCluster { cluster: usize },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("Cholesky factorization of the latent covariance failed")]
    CholeskyFailure,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("K = {k} is not divisible by the group size {group_size}")]
    IndivisibleK { k: usize, group_size: usize },
    #[error("dimension {d} is too small; at least {required} variables are needed")]
    DimensionTooSmall { d: usize, required: usize },
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program did not converge after {iterations} pivots")]
    NotConverged { iterations: usize },
    #[error("non-positive variance estimate {value:.3e} for edge ({t}, {k})")]
    NonPositiveVariance { t: usize, k: usize, value: f64 },
    #[error("probability {0} is outside (0, 1)")]
    DomainError(f64),
    #[error("cross-validation grid is empty")]
    EmptyGrid,
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line} has {found} fields, expected {expected}")]
    NonRectangular {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0} is not implemented")]
    NotImplemented(&'static str),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
