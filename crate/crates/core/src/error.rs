//! Error type shared across the workspace.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{what} is not symmetric")]
    NotSymmetric { what: &'static str },

    #[error("{what} is not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite {
        what: &'static str,
        min_eigenvalue: f64,
    },

    #[error("autoregressive part is non-stationary: companion spectral radius {radius} >= 1")]
    NonStationary { radius: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("insufficient data for {what}: need at least {needed}, got {actual}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        actual: usize,
    },

    #[error("singular matrix in {what}")]
    Singular { what: &'static str },

    #[error("empty input: {what}")]
    EmptyInput { what: &'static str },

    #[error("unknown column {column:?}")]
    UnknownColumn { column: String },

    #[error("unparseable timestamp at data row {row}: {value:?}")]
    BadTimestamp { row: usize, value: String },

    #[error(
        "irregular spacing at data row {row}: expected step {expected_seconds} s, got {actual_seconds} s"
    )]
    IrregularSpacing {
        row: usize,
        expected_seconds: i64,
        actual_seconds: i64,
    },

    #[error("missing value at data row {row}, column {column:?}")]
    MissingValue { row: usize, column: String },

    #[error("unparseable numeric value at data row {row}, column {column:?}: {value:?}")]
    BadNumber {
        row: usize,
        column: String,
        value: String,
    },

    #[error("candidate {name:?} rate miscalibrated: target {target}, realized {realized}")]
    RateMiscalibrated {
        name: String,
        target: f64,
        realized: f64,
    },

    #[error("config error in {path}: {reason}")]
    Config { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 for validation errors, 2 for data errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownColumn { .. }
            | Error::BadTimestamp { .. }
            | Error::IrregularSpacing { .. }
            | Error::MissingValue { .. }
            | Error::BadNumber { .. }
            | Error::Io(_)
            | Error::Csv(_) => 2,
            _ => 1,
        }
    }
}
