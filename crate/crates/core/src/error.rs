use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DripError>;

#[derive(Debug, Error)]
pub enum DripError {
    /// A caller-supplied argument violates a documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// An iterative routine produced non-finite values or failed to converge.
    #[error("numerical failure in {stage} at iteration {iteration}: {detail}")]
    Numerical { stage: &'static str, iteration: usize, detail: String },

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl DripError {
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        DripError::Precondition(msg.into())
    }

    pub(crate) fn numerical(stage: &'static str, iteration: usize, detail: impl Into<String>) -> Self {
        DripError::Numerical { stage, iteration, detail: detail.into() }
    }
}

pub(crate) fn ensure_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(DripError::precondition(format!("{what}: expected length {expected}, got {got}")));
    }
    Ok(())
}
