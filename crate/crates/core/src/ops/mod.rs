//! Functional forward/backward kernels. Every `*_backward` takes the same
//! inputs as its forward plus the upstream gradient.

pub mod activation;
pub mod attention;
pub mod conv;
pub mod loss;
pub mod matmul;
pub mod norm;

pub use activation::{gelu, gelu_backward, relu, relu_backward, sigmoid, sigmoid_backward};
pub use attention::{causal_attention, causal_attention_backward, AttentionShape};
pub use conv::{conv2d, conv2d_backward, conv_transpose2d, conv_transpose2d_backward};
pub use loss::{cross_entropy, mse, softmax_in_place};
pub use matmul::{gemm, MatMut, MatRef};
pub use norm::{layer_norm, layer_norm_backward};
