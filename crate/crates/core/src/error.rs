use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LcgError> = std::result::Result<T, E>;

/// Coarse error category, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum LcgError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}: record {index}: {reason}")]
    Record {
        path: PathBuf,
        index: usize,
        reason: String,
    },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("data: {0}")]
    Data(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("numeric: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<LcgError>,
    },
}

impl LcgError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            LcgError::Config(_) | LcgError::InvalidParameter { .. } => ErrorKind::Config,
            LcgError::Numeric(_) => ErrorKind::Numeric,
            LcgError::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LcgError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        LcgError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        match self {
            already @ LcgError::Stage { .. } => already,
            other => LcgError::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}
