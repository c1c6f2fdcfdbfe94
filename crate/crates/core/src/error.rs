//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors that can occur in estimation, simulation, or backtesting.
#[derive(Debug, Error)]
pub enum Error {
    /// Two matrices (or a matrix and a vector) do not have compatible sizes.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch {
        /// Expected dimension
        expected: usize,
        /// Actual dimension
        actual: usize,
    },

    /// A matrix expected to be symmetric is not, beyond the allowed roundoff.
    #[error("matrix is not symmetric: max |A[i][j] - A[j][i]| = {max_asymmetry:e}")]
    NotSymmetric {
        /// Largest entrywise asymmetry found
        max_asymmetry: f64,
    },

    /// A matrix expected to be positive semi-definite is not.
    #[error("matrix is not positive semi-definite: min eigenvalue = {min_eigenvalue:e}")]
    NotPositiveSemiDefinite {
        /// Most negative eigenvalue found
        min_eigenvalue: f64,
    },

    /// The symmetric eigendecomposition did not converge.
    #[error("symmetric eigendecomposition failed to converge ({dim}x{dim} matrix)")]
    EigenFailure {
        /// Dimension of the offending matrix
        dim: usize,
    },

    /// Not enough observations for the requested operation.
    #[error("insufficient samples: need at least {required} observations, got {actual}")]
    InsufficientSamples {
        /// Required number of observations
        required: usize,
        /// Actual number of observations
        actual: usize,
    },

    /// A target family was empty or reduced to nothing after orthonormalization.
    #[error("target family is empty or fully linearly dependent")]
    DegenerateTargetFamily,

    /// Repeated sampling produced only degenerate draws.
    #[error("sampling produced a degenerate draw {retries} times in a row")]
    DegenerateSample {
        /// Number of attempts made
        retries: usize,
    },

    /// The complex-square-root fast path left a larger imaginary residue than
    /// its tolerance allows, indicating numerical breakdown.
    #[error("imaginary residue {residue:e} exceeds tolerance {tolerance:e}")]
    ImaginaryResidue {
        /// Observed |imaginary part|
        residue: f64,
        /// Allowed budget
        tolerance: f64,
    },

    /// A denominator that must be strictly positive was zero (or negative).
    #[error("zero denominator in {context}")]
    ZeroDenominator {
        /// Human-readable description of the computation
        context: &'static str,
    },

    /// An invalid parameter value was supplied.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A malformed input file (CSV/JSON), with the offending location.
    #[error("parse error at row {row}: {message}")]
    Parse {
        /// 1-based row number in the input file
        row: usize,
        /// Description of the problem
        message: String,
    },

    /// An estimator failed inside a Monte-Carlo replication.
    #[error("replication {index} failed: {source}")]
    Replication {
        /// Index of the failing replication
        index: usize,
        /// Underlying error
        #[source]
        source: Box<Error>,
    },

    /// I/O failure while reading or writing artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// CSV-level failure while reading or writing artifacts.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input (files, parameters,
    /// preconditions) rather than numerical breakdown at runtime.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::DimensionMismatch { .. }
            | Error::NotSymmetric { .. }
            | Error::InsufficientSamples { .. }
            | Error::InvalidParameter(_)
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::DegenerateTargetFamily => true,
            Error::Replication { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
