use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is singular within tolerance (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("{name} is rank deficient (rank {rank}, expected {expected})")]
    RankDeficient {
        name: &'static str,
        rank: usize,
        expected: usize,
    },

    #[error("invalid plant: {0}")]
    InvalidPlant(String),

    #[error("invalid {kind} channel {index}: {reason}")]
    InvalidChannel {
        kind: &'static str,
        index: usize,
        reason: String,
    },

    #[error("no resilient controller found at these attack statistics (lower bound on t* = {lower_bound:.3e})")]
    Infeasible { lower_bound: f64 },

    #[error("LMI solver failed numerically after {iterations} iterations: {reason}")]
    NumericalFailure { iterations: usize, reason: String },

    #[error("W is ill-conditioned (condition number {condition:.3e})")]
    IllConditionedW { condition: f64 },

    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),

    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
}
