use thiserror::Error;

/// Errors raised anywhere in the decomposition / regression pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("need at least {needed} subjects, got {got}")]
    InsufficientSubjects { needed: usize, got: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure in {stage}: {detail}")]
    Numerical { stage: &'static str, detail: String },

    #[error("ill-posed fit: {0}")]
    IllPosedFit(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the caller's inputs rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Numerical { .. } | Error::IllPosedFit(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
