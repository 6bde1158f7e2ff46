//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter violates a precondition.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// Operand shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A masked column lost every nonzero entry and resampling was exhausted.
    #[error("column {col} is entirely zero after masking ({attempts} resample attempts)")]
    DegenerateColumn { col: usize, attempts: usize },

    /// Relative density of a sparsification of an all-zero matrix.
    #[error("relative density is undefined: the base matrix has density 0")]
    UndefinedRatio,

    /// The brute-force RIP scan would have to enumerate too many supports.
    #[error("RIP enumeration guard: C({n}, {k}) = {count} supports exceeds the 10^6 limit; use a smaller instance")]
    EnumerationGuard { n: usize, k: usize, count: u128 },

    /// The threshold scan exhausted its sparsity ceiling without a failure.
    #[error("recovery never dropped below the target rate up to k = {ceiling}; the threshold is at least {ceiling}")]
    ThresholdCeiling { ceiling: usize },

    /// Linear programming failure that is not expressible as a solution status.
    #[error("lp solver: {0}")]
    Lp(String),

    /// Malformed or inconsistent experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed matrix/serialization input.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
