use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
///
/// Every error is classified as either a *validation* failure (bad inputs,
/// bad configuration, malformed files) or a *runtime* failure (I/O while
/// writing, numerical divergence). The CLI maps the former to exit code 1
/// and the latter to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("file not found: {path}")]
    MissingFile { path: PathBuf },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    ParseLine { path: PathBuf, line: u64, msg: String },

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("no {kind} parameter for id `{id}`")]
    MissingParameter { kind: &'static str, id: String },

    #[error("duplicate response for subject `{subject}`, item `{item}` (lines {first_line} and {second_line})")]
    DuplicateResponse {
        subject: String,
        item: String,
        first_line: u64,
        second_line: u64,
    },

    #[error("ELBO became non-finite at step {step}; lower the learning rate")]
    Diverged { step: usize },

    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
}

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Runtime,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Validation => "validation",
            ErrorKind::Runtime => "runtime",
        }
    }

    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Validation => 1,
            ErrorKind::Runtime => 2,
        }
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidInput(_)
            | Error::MissingFile { .. }
            | Error::ParseLine { .. }
            | Error::Parse { .. }
            | Error::MissingParameter { .. }
            | Error::DuplicateResponse { .. } => ErrorKind::Validation,
            Error::Io { .. } | Error::Diverged { .. } | Error::NonFiniteLoss { .. } => {
                ErrorKind::Runtime
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
