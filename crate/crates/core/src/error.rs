//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

use crate::net::Asn;

#[derive(Debug, Error)]
pub enum Error {
    /// A malformed input line. `file` is filled in by the file readers.
    #[error("{}line {line}: field {field}: {msg}", prefix(.file))]
    Parse {
        file: Option<PathBuf>,
        line: usize,
        field: &'static str,
        msg: String,
    },

    /// An AS-set path segment (`{64496,64497}`). Skippable: readers count
    /// these and drop the message instead of aborting.
    #[error("{}line {line}: AS-set in path, message skipped", prefix(.file))]
    AsSetPath { file: Option<PathBuf>, line: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Cone queried for a member it was not built for.
    #[error("unknown member AS{0}")]
    UnknownMember(Asn),

    /// Organization extension applied to the naive (prefix) cone.
    #[error("org extension applies to caida/full cones only, not naive")]
    OrgExtOnNaive,

    #[error("infeasible synthetic parameters: {0}")]
    SynthParams(String),
}

fn prefix(file: &Option<PathBuf>) -> String {
    match file {
        Some(p) => format!("{}: ", p.display()),
        None => String::new(),
    }
}

impl Error {
    /// Attaches a file path to line-scoped parse errors.
    pub fn with_file(self, path: &std::path::Path) -> Error {
        match self {
            Error::Parse {
                line, field, msg, ..
            } => Error::Parse {
                file: Some(path.to_path_buf()),
                line,
                field,
                msg,
            },
            Error::AsSetPath { line, .. } => Error::AsSetPath {
                file: Some(path.to_path_buf()),
                line,
            },
            other => other,
        }
    }

    pub fn is_as_set(&self) -> bool {
        matches!(self, Error::AsSetPath { .. })
    }
}

/// Parse error for a named field before any line number is known.
pub(crate) fn field_err(field: &'static str, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: None,
        line: 0,
        field,
        msg: msg.into(),
    }
}

/// Stamps a line number onto a field-level parse error.
pub(crate) fn at_line(err: Error, line: usize) -> Error {
    match err {
        Error::Parse {
            file, field, msg, ..
        } => Error::Parse {
            file,
            line,
            field,
            msg,
        },
        Error::AsSetPath { file, .. } => Error::AsSetPath { file, line },
        other => other,
    }
}

pub type Result<T> = std::result::Result<T, Error>;
