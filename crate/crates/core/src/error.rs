use thiserror::Error;

/// Errors raised by the consensus engine and its samplers.
#[derive(Debug, Error)]
pub enum CmcError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("shard {shard} failed: {source}")]
    Shard {
        shard: usize,
        #[source]
        source: Box<CmcError>,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CmcError>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(CmcError::Config(msg.into()))
}
