//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Vector widths disagree (logit dimension vs fitted statistics, etc).
    #[error("shape mismatch: expected width {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    /// A parameter is outside its allowed range (tau <= 0, M = 0, ...).
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Statistics cannot be fitted (empty training set).
    #[error("fit error: {0}")]
    Fit(String),

    /// A metric is undefined on the given inputs (empty score set,
    /// no usable class group, ...).
    #[error("metric undefined: {0}")]
    Metric(String),

    /// Inputs that should agree do not (bin counts vs total, ...).
    #[error("inconsistent input: {0}")]
    Consistency(String),

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value at {context}")]
    NonFinite { context: String },

    /// A label is outside [0, N).
    #[error("label {label} out of range for {num_classes} classes")]
    Label { label: i64, num_classes: usize },

    /// File parse failure, with location where available.
    #[error("parse error in {path} (line {line}): {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Manifest-level validation failure.
    #[error("manifest error: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
