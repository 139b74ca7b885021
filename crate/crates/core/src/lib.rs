//! Block-based intra image codec with a neural intra prediction mode whose
//! auxiliary head selects the secondary-transform pair.
//!
//! The numerical core ([`nn`]) is generic over [`Scalar`] (`f32` or `f64`).

pub mod classic;
pub mod codec;
pub mod context;
pub mod corpus;
pub mod entropy;
pub mod evaluate;
pub mod nn;
pub mod plane;
pub mod predictor;
mod scalar;
pub mod signaling;
pub mod training;
pub mod transforms;

pub use scalar::Scalar;

pub type Tensor64 = nn::Tensor<f64>;
pub type Tensor32 = nn::Tensor<f32>;
pub type Network64 = nn::Network<f64>;
pub type Network32 = nn::Network<f32>;
pub type ModelSet64 = predictor::ModelSet<f64>;
pub type ModelSet32 = predictor::ModelSet<f32>;
