use thiserror::Error;

/// Errors raised by the solvers, drivers and instance loaders.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("variable {index} has lower bound {lower} above upper bound {upper}")]
    InvalidBounds {
        index: usize,
        lower: f64,
        upper: f64,
    },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),

    #[error("node limit of {0} reached")]
    NodeLimit(usize),

    #[error("operation requires an optimal LP certificate")]
    NotOptimal,

    #[error("branch-and-bound tree has no usable leaves")]
    EmptyTree,

    #[error("bad range: {0}")]
    BadRange(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("x-box has {points} points, above the cap of {cap}")]
    BoxTooLarge { points: usize, cap: usize },

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("problem is unbounded: {0}")]
    Unbounded(String),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
}

pub type Result<T> = std::result::Result<T, Error>;
