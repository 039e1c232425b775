use thiserror::Error;

/// Failure conditions shared across the sampler and diagnostics modules.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Gradient norm fell below the reflection threshold (1e-12).
    #[error("gradient norm {norm:.3e} too small to define a reflection")]
    ZeroGradient { norm: f64 },
    /// A thinning proposal exceeded its claimed envelope.
    #[error("thinning envelope violated: rate {rate:.6e} > bound {bound:.6e}")]
    BoundViolation { rate: f64, bound: f64 },
    /// The operation needs a factorized potential but none was provided.
    #[error("target has no factor decomposition")]
    MissingFactorization,
    /// A factor is missing the gradient-magnitude bound the operation needs.
    #[error("factor {index} has no gradient bound")]
    MissingBound { index: usize },
    /// Acceptance ratio of the form 0/0.
    #[error("acceptance ratio undefined (0/0)")]
    UndefinedRatio,
    /// A resampling loop ran past its iteration budget.
    #[error("rejection loop exceeded {max} iterations")]
    RejectionBudgetExceeded { max: u64 },
    /// The ray potential handed to the closed-form event-time solver has no
    /// finite minimiser bracket.
    #[error("ray potential not convex with a reachable minimum")]
    NonConvex,
    /// Too few samples for the requested estimate.
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    /// Sample variance vanished where a spread estimate is required.
    #[error("degenerate (zero-variance) sample")]
    DegenerateVariance,
    /// Invalid run configuration.
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
