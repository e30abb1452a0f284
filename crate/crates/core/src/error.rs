use thiserror::Error;

/// Errors raised by the sensing library and CLI front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid mismatch: {0}")]
    InvalidMismatch(String),

    #[error("degenerate mismatch: direct coefficient alpha is zero")]
    DegenerateMismatch,

    #[error("symbol index {index} out of range for {order}-PSK")]
    SymbolIndex { index: usize, order: usize },

    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("variances {0} and {1} are equal within the merge tolerance")]
    DegeneratePair(f64, f64),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("undefined metric: no trials recorded under {0}")]
    EmptyRow(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
