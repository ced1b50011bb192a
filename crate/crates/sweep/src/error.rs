use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("{}", .0.join("; "))]
    Config(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Numerical(#[from] dtc_sync::Error),

    /// A stored per-trajectory file could not be decoded.
    #[error("{path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

impl SweepError {
    /// Machine-parsable category printed on failure.
    pub fn category(&self) -> &'static str {
        match self {
            SweepError::Config(_) => "config",
            SweepError::Io { .. } => "io",
            SweepError::Numerical(_) => "numerical",
            SweepError::Corrupt { .. } => "corrupt-output",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            SweepError::Config(_) => 2,
            SweepError::Io { .. } => 3,
            SweepError::Numerical(_) => 4,
            SweepError::Corrupt { .. } => 5,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> SweepError {
        let path = path.into();
        move |source| SweepError::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, SweepError>;
