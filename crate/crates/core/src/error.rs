use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The policy averted no DALYs relative to doing nothing.
    #[error("non-positive DALYs averted ({dalys_averted})")]
    NonPositiveAverted { dalys_averted: f64 },

    #[error("ill-conditioned GP system: {0}")]
    IllConditioned(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    ExternalSim(#[from] ExternalSimError),

    #[error("batch {batch} aborted: {failed} of {total} simulations failed")]
    BatchAborted {
        batch: usize,
        failed: usize,
        total: usize,
    },

    /// Nothing to work on, e.g. an empty results log.
    #[error("no data: {0}")]
    NoData(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures of the external simulator adapter, with whatever diagnostics
/// could be captured from the child process.
#[derive(Debug, Error)]
pub enum ExternalSimError {
    #[error("failed to spawn `{program}`: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },

    #[error("simulator exited with {status}; stderr: {stderr}")]
    Exit { status: String, stderr: String },

    #[error("simulator timed out after {timeout_ms} ms")]
    Timeout { timeout_ms: u64 },

    #[error("malformed simulator output: {reason}; stdout: {stdout}")]
    Malformed { reason: String, stdout: String },
}
