//! Convolutional autoencoder with a discrete bottleneck: encoder, a
//! 256-entry codebook with three quantizers, decoder, loss and training.

pub mod codebook;
pub mod config;
pub mod error;
pub mod kmeans;
pub mod loss;
pub mod model;
pub mod quantize;
pub mod stcheck;
pub mod tokens;
pub mod train;

pub use codebook::Codebook;
pub use config::{Case, CodebookInit, QuantizerMode, VqvaeConfig, CODEBOOK_SIZE, LATENT_DIM};
pub use error::{Result, VqError};
pub use loss::{vqvae_loss, LossParts};
pub use model::{Decoder, Encoder, VqVae};
pub use quantize::{ema_update, quantize_nearest, quantize_stochastic, Quantized};
pub use tokens::{tokens_to_codes, TokenGrid};
pub use train::{EpochStats, Trainer};
