//! Error type shared by all pipeline modules.
//!
//! Errors split into two classes for the CLI exit-code contract:
//! configuration/validation problems (exit 2) and runtime failures (exit 1).

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("font '{name}' could not be loaded from {path}: {reason}")]
    Font {
        name: String,
        path: PathBuf,
        reason: String,
    },

    #[error("render error for '{label}': {reason}")]
    Render { label: String, reason: String },

    #[error("transport error after {attempts} attempt(s): {reason}")]
    Transport { attempts: u32, reason: String },

    #[error("permanent endpoint error (HTTP {status}): {body_excerpt}")]
    Endpoint { status: u16, body_excerpt: String },

    #[error("cache error in {file}: {reason}")]
    Cache { file: PathBuf, reason: String },

    #[error("scripted behavior missing for cell: {0}")]
    ScriptMiss(String),

    #[error("incomplete stratum {stratum}: expected {expected} cells, found {found}")]
    IncompleteStratum {
        stratum: String,
        expected: usize,
        found: usize,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("missing artifact for this phase: {0}")]
    MissingArtifact(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what} at {path}: {reason}")]
    Malformed {
        what: &'static str,
        path: PathBuf,
        reason: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit-code contract: 2 for configuration/validation, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Validation(_)
            | Error::Font { .. }
            | Error::MissingArtifact(_) => 2,
            _ => 1,
        }
    }
}
