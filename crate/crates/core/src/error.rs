use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad category of a failure, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {msg}")]
    Format {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("invalid label id {id} (vocabulary has {classes} labels)")]
    InvalidLabel { id: usize, classes: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{method}: {source}")]
    Method {
        method: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn with_method(self, method: impl Into<String>) -> Self {
        Error::Method {
            method: method.into(),
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::NonFinite(_) => ErrorClass::Numeric,
            Error::Io { .. } => ErrorClass::Io,
            Error::Method { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}
