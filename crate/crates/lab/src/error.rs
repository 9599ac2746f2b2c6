use std::path::PathBuf;

use thiserror::Error;

/// Failures of the scenario layer.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("{0}")]
    Usage(String),

    #[error("artifacts: {0}")]
    Artifacts(String),

    #[error("{context}: {source}")]
    Engine {
        context: String,
        #[source]
        source: entropic_core::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LabError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        LabError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for usage and configuration problems, 1 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            LabError::Parse { .. } | LabError::Invalid { .. } | LabError::Usage(_) | LabError::Artifacts(_) => 2,
            LabError::Engine { .. } | LabError::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

/// Attach scenario context to engine errors.
pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for std::result::Result<T, entropic_core::Error> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| LabError::Engine {
            context: what(),
            source,
        })
    }
}
