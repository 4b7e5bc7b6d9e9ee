use thiserror::Error;

/// Errors produced by the synthesis toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-finite value produced at step {step}")]
    NonFinite { step: usize },

    #[error("closed loop is not asymptotically stable (spectral radius {rho:.6}); cost diverges")]
    CostDiverges { rho: f64 },

    #[error("insufficient input history: need u_{needed}, earliest available is u_{available}")]
    InsufficientHistory { needed: isize, available: isize },

    #[error("consistency set is empty (center margin {margin:.3e})")]
    EmptyConsistencySet { margin: f64 },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
