use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Bad configuration or input data; the CLI maps this to exit code 2.
    #[error("{0}")]
    Validation(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Nn(#[from] rodforge_nn::NnError),
}

impl CoreError {
    pub fn validation(msg: impl Into<String>) -> Self {
        Self::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure is the caller's input rather than the environment.
    pub fn is_validation(&self) -> bool {
        match self {
            Self::Validation(_) | Self::Parse { .. } | Self::Format(_) => true,
            Self::Nn(e) => matches!(
                e,
                rodforge_nn::NnError::Config(_)
                    | rodforge_nn::NnError::Shape { .. }
                    | rodforge_nn::NnError::Rank { .. }
                    | rodforge_nn::NnError::Checkpoint(_)
                    | rodforge_nn::NnError::EmptyDataset
            ),
            Self::Io { .. } => false,
        }
    }
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
