use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: truncated file, missing {section}")]
    Truncated { path: PathBuf, section: &'static str },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] pcbias_core::Error),
    /// `losses` holds the `(epoch, loss)` snapshots recorded before the blow-up.
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged {
        epoch: usize,
        loss: f64,
        losses: Vec<(usize, f64)>,
    },
    #[error("{0}")]
    Invalid(String),
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Self::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Usage problems (bad config, bad flags) as opposed to failures while running.
    pub fn is_usage(&self) -> bool {
        matches!(self, Self::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
