//! Trainable layers with forward caches and hand-written backward passes.

mod bidirectional;
mod conv_block;
mod convlstm;
mod dense;
mod temporal;

pub use bidirectional::{
    bidirectional_backward, bidirectional_convlstm, bidirectional_forward, BiConvLstmCache,
    BiConvLstmGrads,
};
pub use conv_block::{conv_block_backward, conv_block_forward, Activation, ConvBlockCache};
pub use convlstm::{
    convlstm_backward_through_time, convlstm_sequence_forward, convlstm_step, ConvLstmCache,
    ConvLstmParams, ConvLstmState, GateActivations, PARAM_NAMES as CONVLSTM_PARAM_NAMES,
};
pub use dense::{dense_backward, dense_forward, DenseGrads};
pub use temporal::{temporal_mean_pool, temporal_mean_pool_backward};

use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Centered uniform draw on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn uniform_init<T: Scalar, R: Rng + ?Sized>(dims: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    scaled_uniform_init(dims, fan_in, 1.0, rng)
}

/// Centered uniform draw on `[-gain/sqrt(fan_in), gain/sqrt(fan_in)]`.
pub fn scaled_uniform_init<T: Scalar, R: Rng + ?Sized>(
    dims: &[usize],
    fan_in: usize,
    gain: f64,
    rng: &mut R,
) -> Tensor<T> {
    let bound = gain / (fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(dims, |_| T::of(rng.gen_range(-bound..=bound)))
}
