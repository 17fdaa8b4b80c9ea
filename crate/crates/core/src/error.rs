use std::fmt;
use std::path::PathBuf;

/// A single schema problem found while validating an input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Dotted field path, e.g. `edge[2].density`.
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The emission model produced a non-finite value.
    #[error("model error: {0}")]
    Model(String),

    /// Missing or inconsistent configuration (e.g. absent table entry).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("problem too large for brute force: {entries} entries (max {max})")]
    Size { entries: usize, max: usize },

    /// Input file failed validation; every violation is reported.
    #[error("{} validation error(s) in {}:\n{}", .violations.len(), .source_name, join_violations(.violations))]
    Validation {
        source_name: String,
        violations: Vec<Violation>,
    },

    #[error("failed to parse {source_name}: {message}")]
    Parse {
        source_name: String,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("  {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. } | Error::Parse { .. } | Error::Domain(_) | Error::Config(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
