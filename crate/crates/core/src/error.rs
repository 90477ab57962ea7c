use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AddsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged: loss term `{term}` is {value}")]
    Divergence { term: String, value: f64 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("sequence error: {0}")]
    Sequence(String),

    #[error("version error: {0}")]
    Version(String),

    #[error("usage error: {0}")]
    Usage(String),
}

impl AddsError {
    /// Stable machine-readable code printed as the prefix of CLI errors.
    pub fn code(&self) -> &'static str {
        match self {
            AddsError::InvalidInput(_) => "E_INVALID_INPUT",
            AddsError::DegenerateInput(_) => "E_DEGENERATE_INPUT",
            AddsError::Config(_) => "E_CONFIG",
            AddsError::Divergence { .. } => "E_DIVERGENCE",
            AddsError::Io { .. } => "E_IO",
            AddsError::Format(_) => "E_FORMAT",
            AddsError::Sequence(_) => "E_SEQUENCE",
            AddsError::Version(_) => "E_VERSION",
            AddsError::Usage(_) => "E_USAGE",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AddsError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, AddsError>;

pub(crate) fn invalid(msg: impl Into<String>) -> AddsError {
    AddsError::InvalidInput(msg.into())
}
