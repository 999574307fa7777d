//! Minimal feed-forward network engine: tensors, convolution/dense layers
//! with exact gradients, RMSProp and weight clipping.
//!
//! Parameters are stored as `f32`; every reduction (dot products,
//! convolution sums, gradient accumulation) runs in `f64` in a fixed order,
//! so results are bit-reproducible for a given seed and input.

mod gemm;
mod layer;
mod network;
mod optim;
mod rng;
mod tensor;

pub use layer::LayerSpec;
pub use network::{
    default_critic_layers, default_generator_layers, encoder_decoder_generator_layers,
    init_network, Gradients, Network, Role, Trace,
};
pub use optim::{clip_weights, rmsprop_step, Direction, RmsProp};
pub use rng::SeededRng;
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("incompatible layer specification: {0}")]
    IncompatibleSpec(String),
    #[error("trace does not belong to this network: {0}")]
    TraceMismatch(String),
    #[error("clip constant must be positive, got {0}")]
    NonpositiveClip(f32),
}
