use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate geodesic: {0}")]
    DegenerateGeodesic(String),

    #[error("reindexing error: {0}")]
    Reindex(String),

    #[error("class {class} has no samples")]
    MissingClass { class: usize },

    #[error("class {class} is degenerate: feature sum has norm {norm:e}")]
    DegenerateClass { class: usize, norm: f64 },

    #[error("checkpoint {index}: {source}")]
    Checkpoint {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse failure class, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Validation => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Io => 4,
        }
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Validation(_)
            | Error::Dimension(_)
            | Error::Domain(_)
            | Error::MissingClass { .. }
            | Error::Format(_)
            | Error::Pipeline(_)
            | Error::Json(_) => ErrorKind::Validation,
            Error::DegenerateGeodesic(_)
            | Error::Reindex(_)
            | Error::DegenerateClass { .. }
            | Error::Numerical(_)
            | Error::Internal(_) => ErrorKind::Numerical,
            Error::Io { .. } => ErrorKind::Io,
            Error::Checkpoint { source, .. } => source.kind(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_checkpoint(self, index: usize) -> Self {
        Error::Checkpoint {
            index,
            source: Box::new(self),
        }
    }
}
