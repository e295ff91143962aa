use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad or inconsistent configuration; reported before any work starts.
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    /// A data file that does not parse; `row` is 1-based and counts the header.
    #[error("{}: row {row}, column '{column}': {message}", path.display())]
    Parse { path: PathBuf, row: usize, column: String, message: String },
    #[error("{}: {message}", path.display())]
    Data { path: PathBuf, message: String },
    #[error("checkpoint does not match the configured model: expected D={expected_d}, H={expected_h}, found D={found_d}, H={found_h}")]
    Dimension { expected_d: usize, expected_h: usize, found_d: usize, found_h: usize },
    #[error(transparent)]
    Core(#[from] preig_core::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    /// 2 for configuration and validation failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Dimension { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
