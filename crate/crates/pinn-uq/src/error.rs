//! Error type shared across the crate.

use std::path::PathBuf;

/// Errors produced by any stage of the pipeline.
///
/// Variants are grouped into stable classes so the CLI can map them onto
/// fixed exit codes (see [`Error::exit_code`]).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration, unknown preset/method, or malformed request.
    #[error("usage: {0}")]
    Usage(String),

    /// Shape or index mismatch between caller-supplied structures.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Violation of a structural precondition (e.g. tape operand out of range).
    #[error("structural error: {0}")]
    Structure(String),

    /// Coordinates outside the declared problem domain.
    #[error("out of domain: {0}")]
    Domain(String),

    /// A numeric routine produced or encountered a non-finite value.
    #[error("numeric failure at {stage}: {detail}")]
    Numeric { stage: String, detail: String },

    /// Malformed CSV row.
    #[error("{path}:{line}: {detail}")]
    CsvParse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    /// CSV header does not match any known schema.
    #[error("{path}: unknown header {header:?} (expected one of {expected})")]
    CsvSchema {
        path: PathBuf,
        header: String,
        expected: String,
    },

    /// Input collection was empty where at least one element is required.
    #[error("empty input: {0}")]
    Empty(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable per-class process exit code.
    ///
    /// 2 usage/config, 3 data/i-o, 4 numeric abort, 5 internal contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Io { .. } | Error::CsvParse { .. } | Error::CsvSchema { .. } => 3,
            Error::Numeric { .. } => 4,
            Error::Dimension(_) | Error::Structure(_) | Error::Domain(_) | Error::Empty(_) => 5,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
