use thiserror::Error;
use vqat_core::NnError;

#[derive(Debug, Error)]
pub enum VqError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("token {token} outside codebook of size {size}")]
    Range { token: usize, size: usize },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = VqError> = std::result::Result<T, E>;
