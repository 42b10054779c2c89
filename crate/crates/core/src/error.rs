use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid objective: {0}")]
    InvalidObjective(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("multiplier must be nonnegative, got {0}")]
    NegativeMultiplier(f64),

    /// The inner maximization over ξ has no finite value at this multiplier.
    #[error("inner maximization unbounded: lambda {lambda} does not exceed concavity threshold {threshold}")]
    UnboundedInnerMax { lambda: f64, threshold: f64 },

    #[error("projection failed: {0}")]
    Projection(String),

    #[error("trajectory diverged at step {step}: state norm {norm:e}")]
    Diverged { step: u64, norm: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    MaxIterations { iterations: u64, residual: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
