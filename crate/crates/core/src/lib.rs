//! Minimal CPU tensor substrate: dense row-major tensors, hand-derived
//! forward/backward kernels, parameter containers with Adam state, a
//! finite-difference gradient checker and the `VQAT` tensor container.
//!
//! Layers never cache activations. A model runs `forward`, keeps whatever
//! intermediates it needs, and passes them back to `backward`.

pub mod adam;
pub mod container;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod ops;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use error::{NnError, Result};
pub use layers::{Module, Param};
pub use scalar::Scalar;
pub use tensor::Tensor;
