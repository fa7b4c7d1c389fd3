use std::path::PathBuf;

use thiserror::Error;

/// Broad failure category, used for exit codes and FFI status mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Parse,
    Integrity,
    Contract,
    Degenerate,
    Conflict,
    Config,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Io => "io",
            ErrorKind::Parse => "parse",
            ErrorKind::Integrity => "integrity",
            ErrorKind::Contract => "contract",
            ErrorKind::Degenerate => "degenerate",
            ErrorKind::Conflict => "conflict",
            ErrorKind::Config => "config",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Integrity(String),

    /// A caller broke an operation's precondition (dead trie prefix, etc).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate document {doc_id}: {reason}")]
    Degenerate { doc_id: String, reason: String },

    #[error("docid conflict: {}", format_groups(.groups))]
    Conflict { groups: Vec<Vec<String>> },

    #[error("config: {0}")]
    Config(String),
}

fn format_groups(groups: &[Vec<String>]) -> String {
    groups
        .iter()
        .map(|g| format!("[{}]", g.join(", ")))
        .collect::<Vec<_>>()
        .join(" ")
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Parse { .. } => ErrorKind::Parse,
            Error::Integrity(_) => ErrorKind::Integrity,
            Error::Contract(_) => ErrorKind::Contract,
            Error::Degenerate { .. } => ErrorKind::Degenerate,
            Error::Conflict { .. } => ErrorKind::Conflict,
            Error::Config(_) => ErrorKind::Config,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
