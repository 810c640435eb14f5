use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid has {len} points, at least {min} required")]
    GridTooSmall { len: usize, min: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("schema error at row {row}: {message}")]
    Schema { row: usize, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid weights: {0}")]
    Weight(String),

    #[error("treatment arm {arm} has no samples")]
    ArmEmpty { arm: u8 },

    #[error("treatments are not binary")]
    NotBinary,

    #[error("numerical error: {0}")]
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
