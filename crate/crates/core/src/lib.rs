//! Volumetric spatio-temporal classification engine.
//!
//! A per-timestep 3-D CNN with tied weights feeds either a stacked
//! bidirectional 3-D convolutional LSTM and a second 3-D CNN, or a global
//! pooling + temporal 1-D convolution head. Everything runs on the CPU with
//! hand-written gradients, in `f32` for training and `f64` for verification.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod models;
pub mod optim;
pub mod scalar;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;
