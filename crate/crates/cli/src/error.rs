use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("missing prerequisite `{artifact}`: run `vqat {stage}` first")]
    Dependency { artifact: String, stage: String },
    #[error("`{artifact}` is stale: {reason}")]
    Stale { artifact: String, reason: String },
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.into())
            }
        }
    )*};
}

runtime_from!(
    std::io::Error,
    serde_json::Error,
    vqat_core::NnError,
    vqat_audio::AudioError,
    vqat_vqvae::VqError,
    vqat_prior::PriorError,
    vqat_eval::EvalError
);
