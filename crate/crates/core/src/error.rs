use std::path::PathBuf;

/// Errors returned by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Shapes or layouts do not fit together (member counts, group partitions, ...).
    #[error("structural error: {0}")]
    Structural(String),

    /// Coefficients produce an invalid predictive distribution.
    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),

    /// Input data failed validation. Each entry names the offending row.
    #[error("ingestion failed for {path}:\n  {}", .problems.join("\n  "))]
    Ingestion { path: String, problems: Vec<String> },

    /// A configuration file or key is missing or malformed.
    #[error("config error: {0}")]
    Config(String),

    /// No history is available before the requested date.
    #[error("empty rolling window: {0}")]
    EmptyWindow(String),

    /// No training data could be assembled; estimation is skipped.
    #[error("estimation skipped: {0}")]
    EstimationSkipped(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
