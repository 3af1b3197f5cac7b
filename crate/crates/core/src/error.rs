use thiserror::Error;

use crate::experiment::TrialRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution spec: {0}")]
    InvalidSpec(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The period ratio does not leave the risk matrix regularized (needs p > N).
    #[error("alpha = {alpha} is outside the regularized regime (need alpha > 1 and p > N)")]
    Regime { alpha: f64 },

    #[error("degenerate risk matrix ({0}): alpha <= 1 regime or degenerate sample")]
    Degenerate(String),

    #[error("stationarity solve did not converge after {iterations} iterations; residuals {residual:?}")]
    NonConvergence {
        iterations: usize,
        residual: Vec<f64>,
    },

    /// A Monte Carlo trial failed. `partial` holds the records of the trials
    /// that did complete, in trial-index order.
    #[error("trial {index} failed after {} completed trials: {source}", partial.len())]
    TrialFailed {
        index: usize,
        partial: Vec<TrialRecord>,
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// The innermost error, looking through trial failures.
    pub fn root(&self) -> &Error {
        match self {
            Error::TrialFailed { source, .. } => source.root(),
            other => other,
        }
    }
}
