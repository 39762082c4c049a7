//! Crate-wide error type.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {context}: {left} vs {right}")]
    ShapeMismatch {
        context: String,
        left: String,
        right: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("non-finite value in {context} (epoch {epoch}, batch {batch})")]
    NonFinite {
        context: String,
        epoch: usize,
        batch: usize,
    },

    #[error("non-finite function evaluation at coordinate {coordinate}")]
    NonFiniteEvaluation { coordinate: usize },

    #[error("bad magic in {path}: expected {expected}, found {found}")]
    BadMagic {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("truncated payload in {path}: expected {expected} bytes, found {actual}")]
    TruncatedPayload {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("dimension overflow in {path}: {detail}")]
    DimensionOverflow { path: PathBuf, detail: String },

    #[error("archive version mismatch in {path}: expected {expected}, found {found}")]
    VersionMismatch {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("archive kind mismatch in {path}: expected {expected}, found {found}")]
    KindMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("archive checksum failure in {path}")]
    ChecksumFailure { path: PathBuf },

    #[error("missing ensemble member: {0}")]
    MissingMember(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn shape(context: impl Into<String>, left: impl Into<String>, right: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            left: left.into(),
            right: right.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for failures of numerical origin (exploding updates, NaN losses).
    /// The CLI maps these to a distinct exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::NonFiniteEvaluation { .. }
        )
    }
}
