use thiserror::Error;

/// Errors raised by the library.
///
/// The CLI maps [`Error::Usage`] to exit code 1 and every other variant to
/// exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix has numerical rank zero")]
    ZeroRank,

    #[error("sketch drops rank: rank(SA) = {sketched}, rank(A) = {full}")]
    RankDrop { sketched: usize, full: usize },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("full vector required: {0}")]
    FullVectorRequired(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("memory cap exceeded: {entries} entries requested, cap is {cap}")]
    MemoryCap { entries: usize, cap: usize },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
