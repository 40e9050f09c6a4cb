use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too small: {n_radial}x{n_angular} (need at least {min}x{min})")]
    GridTooSmall {
        n_radial: usize,
        n_angular: usize,
        min: usize,
    },

    #[error("field has {got} nodes but geometry has {expected}")]
    NodeCountMismatch { expected: usize, got: usize },

    #[error("rank mismatch: expected {expected}, got {got}")]
    RankMismatch { expected: usize, got: usize },

    #[error("invalid bundle: {0}")]
    InvalidBundle(String),

    #[error("invalid filtration: {0}")]
    InvalidFiltration(String),

    #[error("metric is not positive definite at node {node} (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { node: usize, min_eigenvalue: f64 },

    #[error("metric is ill-conditioned at node {node} (condition number {condition:e})")]
    IllConditioned { node: usize, condition: f64 },

    #[error("non-finite values encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not unitary (deviation {0:e})")]
    NotUnitary(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}
