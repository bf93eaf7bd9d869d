use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("value iteration did not converge within {iters} iterations (residual {residual:.3e} > tol {tol:.3e})")]
    NoConvergence {
        iters: usize,
        residual: f64,
        tol: f64,
    },

    #[error("induced chain is not ergodic (violates the ergodicity assumption): {0}")]
    NotErgodic(String),

    #[error("transition matrix has repeated eigenvalues (gap {gap:.3e} < {tol:.3e}); distinct-eigenvalue assumption violated")]
    RepeatedEigenvalues { gap: f64, tol: f64 },

    #[error("mixing time exceeds cap {cap} (last TV distance {last_tv:.6})")]
    MixingTimeCapExceeded { cap: usize, last_tv: f64 },

    #[error("parallel sampler exhausted its step budget of {budget} before covering all pairs ({uncovered} buckets short)")]
    CoverageFailure { budget: usize, uncovered: usize },

    #[error("infeasible bound parameters: {0}")]
    InfeasibleParameters(String),

    #[error("numeric overflow or underflow: {0}")]
    Numeric(String),

    #[error("empty sample bucket for state {state}, action {action}")]
    EmptyBucket { state: usize, action: usize },

    #[error("invalid dataset split: {0}")]
    InvalidSplit(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no expert points in feature dataset")]
    NoExpertPoints,

    #[error("off-policy evaluation failed: {0}")]
    OpeFailure(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
