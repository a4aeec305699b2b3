use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class; the CLI maps these onto its exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Degenerate,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite or out-of-range coordinate at index {index}: ({x}, {y})")]
    Coordinate { index: usize, x: f64, y: f64 },

    #[error("invalid polygon for zone {zone_id}: {reason}")]
    Structure { zone_id: String, reason: String },

    #[error("missing mapped columns: {}", .0.join(", "))]
    MissingColumns(Vec<String>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("need more than k = {k} zones for KNN weights, got n = {n}")]
    Sizing { n: usize, k: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{path}: {source}")]
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

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::MissingColumns(_) | Error::Config(_) => ErrorKind::Config,
            Error::Degenerate(_) => ErrorKind::Degenerate,
            Error::Io { .. } => ErrorKind::Io,
            Error::Coordinate { .. }
            | Error::Structure { .. }
            | Error::Data(_)
            | Error::Sizing { .. }
            | Error::Domain(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorKind::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
