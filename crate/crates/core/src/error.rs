use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse JSON: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("network is not radial: {0}")]
    NonRadial(String),

    #[error("power flow did not converge after {iterations} iterations (last mismatch {mismatch:.3e} p.u.)")]
    NonConvergence { iterations: usize, mismatch: f64 },

    #[error("voltage collapse: mismatch diverged to {mismatch:.3e} p.u. at iteration {iteration}")]
    VoltageCollapse { iteration: usize, mismatch: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("backward called without a cached forward pass")]
    MissingForwardCache,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
