use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Variants are grouped by the caller-facing category used by the CLI to pick
/// an exit code (see [`Error::category`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("estimator not applicable: {0}")]
    WrongEstimator(String),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("invalid event type: {0}")]
    InvalidEvent(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("no convergence after {iterations} iterations (gradient norm {gradient_norm:e})")]
    Convergence {
        iterations: usize,
        gradient_norm: f64,
        last_beta: Vec<f64>,
    },
    #[error("monotone likelihood: coefficient {index} diverged to {value} (separation; set a ridge penalty)")]
    MonotoneLikelihood { index: usize, value: f64 },
    #[error("shape mismatch: expected {expected} covariates, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("stratification impossible: {0}")]
    Stratification(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("validation failed for player {player}: {message}")]
    Validation { player: String, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("incompatible input: {0}")]
    Compatibility(String),
    #[error("unsupported model file version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse error category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Internal,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_)
            | Error::WrongEstimator(_)
            | Error::InvalidEvent(_)
            | Error::InvalidModel(_)
            | Error::Shape { .. } => ErrorCategory::Config,
            Error::Io(_) | Error::Json(_) => ErrorCategory::Internal,
            _ => ErrorCategory::Data,
        }
    }

    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
