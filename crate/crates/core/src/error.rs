use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("contract error: {0}")]
    Contract(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category, used by the CLI error line.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Index(_) => "index",
            Error::Contract(_) => "contract",
            Error::Lookup(_) => "lookup",
            Error::Config(_) => "config",
            Error::Validation(_) => "validation",
            Error::Data(_) => "data",
            Error::Evaluation(_) => "evaluation",
            Error::Input(_) => "input",
            Error::Parse { .. } => "parse",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
