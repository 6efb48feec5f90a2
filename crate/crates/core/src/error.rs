use std::path::PathBuf;

/// Errors produced by the engine and the analysis routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("streaming state mismatch: {0}")]
    State(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("unsupported layer for zero-padding probe: {0}")]
    UnsupportedProbe(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the environment rather than by bad input.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
