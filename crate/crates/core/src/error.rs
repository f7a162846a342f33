use thiserror::Error;

use crate::propagator::CostateBoundary;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QoctError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch for {what}: expected {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{0} contains non-finite values")]
    NonFinite(&'static str),

    #[error("{what} is not Hermitian (max |A - A^H| = {deviation:e})")]
    NotHermitian { what: &'static str, deviation: f64 },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("state is not normalized (norm = {norm})")]
    NotNormalized { norm: f64 },

    #[error("expectation value has imaginary part {imag:e}; operator is not Hermitian")]
    ComplexExpectation { imag: f64 },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("trajectory does not satisfy the Schrodinger equation (residual {residual:e})")]
    InconsistentTrajectory { residual: f64 },

    #[error("costate boundary {found:?} not supported here; expected {expected}")]
    BoundaryMode {
        expected: &'static str,
        found: CostateBoundary,
    },

    #[error("index {index} out of range for {len} samples")]
    IndexOutOfRange { index: usize, len: usize },
}

pub type Result<T> = std::result::Result<T, QoctError>;
