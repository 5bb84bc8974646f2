use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the analysis library.
///
/// Variants are grouped by how a front end should react: configuration
/// problems, malformed or unbalanced data, and numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("design size error: {0}")]
    Size(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("unbalanced design: arm {arm} has {count} units, expected {expected}")]
    Unbalanced {
        arm: String,
        count: usize,
        expected: usize,
    },

    #[error("enumeration of {count} assignments exceeds cap {cap}; use Monte Carlo draws instead")]
    EnumerationTooLarge { count: f64, cap: u64 },

    #[error("line {line}: {message}")]
    Ingestion { line: usize, message: String },

    #[error("no sign change of the p-value curve inside [{lower}, {upper}] for effect {effect}; widen the grid")]
    Bracket {
        effect: String,
        lower: f64,
        upper: f64,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by the command-line front end for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Size(_)
            | Error::Config(_)
            | Error::Model(_)
            | Error::EnumerationTooLarge { .. } => ErrorClass::Config,
            Error::DimensionMismatch { .. }
            | Error::InsufficientData(_)
            | Error::Unbalanced { .. }
            | Error::Ingestion { .. }
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorClass::Data,
            Error::Bracket { .. } | Error::Numeric(_) => ErrorClass::Numeric,
        }
    }
}
