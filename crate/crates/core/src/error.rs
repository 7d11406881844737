use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unreadable record source: {0}")]
    Source(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("antenna registry: {0}")]
    Registry(String),

    #[error("endemic zone: {0}")]
    Zone(String),

    #[error("invalid study window: {0}")]
    Window(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("model: {0}")]
    Model(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable kind, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } | Error::Source(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Registry(_) => "registry",
            Error::Zone(_) => "zone",
            Error::Window(_) => "window",
            Error::Config(_) => "config",
            Error::Dataset(_) => "dataset",
            Error::Model(_) => "model",
        }
    }
}
