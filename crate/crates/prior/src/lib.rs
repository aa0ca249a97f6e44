//! Decoder-only transformer prior over token sequences, with class-token
//! conditioning, training and autoregressive sampling.

pub mod config;
pub mod error;
pub mod fakes;
pub mod model;
pub mod sample;
pub mod sequences;
pub mod train;
pub mod vocab;

pub use config::PriorConfig;
pub use error::{PriorError, Result};
pub use fakes::{generate_class_fakes, generate_fake_set, FakeMeta, FakeSet, GenerationMode, StartPolicy};
pub use model::{Generator, Transformer};
pub use sample::{sample_continuation, sample_sequence, sample_token, ConstantModel, TokenModel};
pub use sequences::build_training_sequences;
pub use train::{PriorEpoch, PriorTrainer};
pub use vocab::{class_token, digit_of, BOS, CODEBOOK_SIZE, VOCAB_SIZE};
