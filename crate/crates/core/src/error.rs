use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("unsupported parameters: {0}")]
    UnsupportedParameters(String),

    #[error("code capacity exceeded: requested {requested} codewords, found {found}")]
    CapacityExceeded { requested: usize, found: usize },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Schema or semantic error in a scenario, `path` is JSON-pointer style.
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("infeasible private-network count {pn_count}: deficit {deficit_db:.3} dB{}", if *.thresholder_required { " (thresholder required)" } else { "" })]
    Feasibility {
        pn_count: usize,
        deficit_db: f64,
        thresholder_required: bool,
    },

    #[error("simulation invariant violated: {0}")]
    Invariant(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 I/O, 3 feasibility, 4 config, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Feasibility { .. } => 3,
            Error::Config { .. } => 4,
            _ => 1,
        }
    }
}
