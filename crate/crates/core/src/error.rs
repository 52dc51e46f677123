use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
///
/// `InvalidInput` covers anything that is the caller's fault (bad indices,
/// malformed files, violated preconditions); the CLI maps it to the
/// validation-failure exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("self-links not allowed (line {line}: {node},{node})")]
    SelfLink { line: usize, node: usize },

    #[error("node index {index} out of range for {n} nodes (line {line})")]
    IndexOutOfRange { line: usize, index: usize, n: usize },

    #[error("covariates must be nonnegative (row {row}, column {col}: {value})")]
    NegativeCovariate { row: usize, col: usize, value: f64 },

    #[error("exact enumeration infeasible for N={n} (cap {cap})")]
    EnumerationInfeasible { n: usize, cap: usize },

    #[error("mean-field parameter outside (0,1) at index {index}: {value}")]
    Domain { index: usize, value: f64 },

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by bad user input rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
