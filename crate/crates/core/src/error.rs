use thiserror::Error;

/// Failure classes surfaced by the library. The CLI maps each class onto an
/// exit code (config = 2, data = 3, numeric = 4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("matrix is not positive definite (leading minor {minor})")]
    NotPositiveDefinite { minor: usize },

    #[error("non-finite gradient at row {row} (iteration {iteration})")]
    NonFiniteGradient { row: usize, iteration: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Data(_) | Error::Io { .. } | Error::Json(_) => ErrorClass::Data,
            Error::Numeric(_) | Error::NotPositiveDefinite { .. } | Error::NonFiniteGradient { .. } => {
                ErrorClass::Numeric
            }
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
