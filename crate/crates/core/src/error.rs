use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("missing column `{0}` in CSV header")]
    MissingColumn(String),

    #[error("unknown region id `{0}`")]
    UnknownRegion(String),

    #[error("duplicate region id `{0}`")]
    DuplicateRegion(String),

    #[error("invalid year-month `{0}` (expected YYYY-MM)")]
    YearMonth(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sampler initialisation failed: {0}")]
    Init(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
