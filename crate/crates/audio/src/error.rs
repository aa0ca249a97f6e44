use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV file: {0}")]
    Parse(String),
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("signal is silent after trimming")]
    EmptySignal,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tensor(#[from] vqat_core::NnError),
}

pub type Result<T, E = AudioError> = std::result::Result<T, E>;
