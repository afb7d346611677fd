use std::path::PathBuf;

use funcqr::{IngestError, QrError, SelectionError, SmoothingError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{context}: {source}")]
    Ingest {
        context: String,
        #[source]
        source: IngestError,
    },
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Smoothing(#[from] SmoothingError),
    #[error(transparent)]
    Qr(#[from] QrError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
}

impl CliError {
    /// 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Ingest {
                source: IngestError::Empty,
                ..
            } => 1,
            CliError::Io { .. } | CliError::Json { .. } | CliError::Csv { .. } | CliError::Ingest { .. } | CliError::Data(_) => 2,
            CliError::Smoothing(SmoothingError::OutOfDomain { .. } | SmoothingError::InvalidBasis(_)) => 2,
            CliError::Qr(QrError::ZeroColumn { .. }) => 3,
            CliError::Qr(_) => 2,
            CliError::Selection(SelectionError::InvalidK { .. }) => 1,
            CliError::Selection(SelectionError::PopulationMismatch { .. } | SelectionError::ZeroPopulation) => 2,
            CliError::Smoothing(_) | CliError::Selection(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
