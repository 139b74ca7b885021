//! Minimal deterministic neural-network engine.
//!
//! Batched fully-connected and strided convolution layers, LeakyReLU,
//! analytic backward passes and ADAM. Everything is generic over
//! [`Scalar`](crate::Scalar); `f64` is the reference precision.

mod adam;
pub mod arch;
mod io;
mod network;
mod ops;
mod tensor;

use thiserror::Error;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use arch::{Activation, Architecture, ConvShape, LayerKind, LayerSpec, Source};
pub use network::{ActivationCache, ForwardOutput, Gradients, LayerParams, Network};
pub use ops::{log_softmax, softmax};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch at layer {layer}: expected {expected}, found {found}")]
    ShapeMismatch {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("tensor data length {found} does not match shape product {expected}")]
    DataLength { expected: usize, found: usize },
    #[error("non-finite tensor value")]
    NonFinite,
    #[error("activation cache does not belong to the current parameters")]
    StaleCache,
    #[error("invalid layer graph at layer {layer}")]
    BadGraph { layer: usize },
    #[error("no network architecture for {h}x{w} blocks")]
    UnsupportedSize { h: usize, w: usize },
    #[error("invalid optimizer hyperparameter")]
    BadHyperparameter,
    #[error("weight file: {0}")]
    BadFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
