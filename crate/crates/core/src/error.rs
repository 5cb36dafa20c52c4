use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: u32 },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("not enough eligible {kind}: need {needed}, have {available}")]
    Eligibility {
        kind: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("method {method} does not support {what}")]
    Capability { method: String, what: String },

    #[error("unsupported task: {0}")]
    Unsupported(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a failure at run time.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::NonFinite(_) | Error::Sampling(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
