use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid data: {0}")]
    Data(String),

    /// The component cannot serve the request yet (replay memory underfull,
    /// environment model untrained). Callers usually skip the work this step.
    #[error("not ready: {0}")]
    NotReady(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The workload trace has no more arrival rates.
    #[error("episode ended: workload trace exhausted")]
    EpisodeEnd,

    #[error("undefined input: {0}")]
    UndefinedInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_not_ready(&self) -> bool {
        matches!(self, Error::NotReady(_))
    }
}
