use thiserror::Error;
use vqat_core::NnError;

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("prefix of {len} tokens exceeds the context of {context}")]
    ContextOverflow { len: usize, context: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T, E = PriorError> = std::result::Result<T, E>;
