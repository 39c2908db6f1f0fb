//! Experiment orchestration around `hmmq-core`: configuration files,
//! deterministic metrics and checkpoints, training and evaluation runs, and
//! report generation.

pub mod checkpoint;
pub mod config;
pub mod metrics;
pub mod report;
pub mod runner;

use std::path::PathBuf;

/// Errors surfaced by the experiment runner.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Core(#[from] hmmq_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
