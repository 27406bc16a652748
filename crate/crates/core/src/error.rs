use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("basis index {index} out of range (n_max = {n_max})")]
    IndexOutOfRange { index: usize, n_max: usize },

    #[error("coherent state with amplitude {alpha} loses {tail:.3e} probability above n_max = {n_max}")]
    TruncationLeakage { alpha: f64, n_max: usize, tail: f64 },

    #[error("measurement branch '{0}' has zero probability")]
    ZeroProbabilityBranch(char),

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("state dimension {got} does not match truncation dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("cumulative leakage {cumulative:.3e} exceeded budget {budget:.3e} at step {step}")]
    LeakageBudget {
        step: usize,
        cumulative: f64,
        budget: f64,
    },

    #[error("{aborted} of {total} trajectories aborted on leakage budget")]
    EnsembleAborted { aborted: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
