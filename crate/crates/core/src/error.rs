use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the library. The CLI maps each variant onto an exit-code
/// class via [`Error::class`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric: |a[{row},{col}] - a[{col},{row}]| = {gap:e}")]
    SymmetryViolation { row: usize, col: usize, gap: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("length mismatch: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("unsupported IDX type code 0x{0:02x}")]
    UnsupportedType(u8),

    #[error("requested {requested} samples but only {available} are available")]
    Exhausted { requested: usize, available: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in layer {layer}")]
    NumericOverflow { layer: usize },

    #[error("non-finite covariance in layer {layer} at grid position {position}")]
    NonFinite { layer: usize, position: usize },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("ill-conditioned: {0}")]
    Conditioning(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("kernel is not positive semidefinite: min eigenvalue {min:e} < -{tol:e}")]
    KernelValidity { min: f64, tol: f64 },

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad arguments or configuration.
    Argument,
    /// Unreadable, malformed or missing input data.
    Data,
    /// Anything else.
    Internal,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Configuration(_) | Error::Usage(_) | Error::Domain(_) => ErrorClass::Argument,
            Error::Format(_)
            | Error::LengthMismatch { .. }
            | Error::UnsupportedType(_)
            | Error::Exhausted { .. }
            | Error::MissingData(_)
            | Error::Checksum { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Resolution(_)
            | Error::InvalidInput(_)
            | Error::Shape(_)
            | Error::SymmetryViolation { .. }
            | Error::KernelValidity { .. } => ErrorClass::Data,
            _ => ErrorClass::Internal,
        }
    }
}
