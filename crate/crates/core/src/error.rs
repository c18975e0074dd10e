use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// Structured text could not be parsed.
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    /// A caller broke an operation's precondition (length mismatch, empty input, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A numeric argument lies outside the mathematical domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A loss or gradient became non-finite during optimization.
    #[error("training diverged: {0}")]
    Divergence(String),

    /// A binary or CSV artifact is malformed.
    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    /// A rollout worker failed; the seed replays it.
    #[error("rollout worker {worker} (seed {seed}) failed: {reason}")]
    Worker { worker: usize, seed: u64, reason: String },

    #[error("missing file {}", path.display())]
    MissingFile { path: PathBuf },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by invalid user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Parse { .. } | Error::MissingFile { .. }
        )
    }
}
