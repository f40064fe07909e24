use std::path::PathBuf;

/// Errors produced anywhere in the grip-map pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("value out of range: {0}")]
    Range(String),

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate statistics: {0}")]
    DegenerateStatistics(String),

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("invalid model input: {0}")]
    Input(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
