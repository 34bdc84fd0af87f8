//! Convolution, activation and inverted dropout, applied to one timestep.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{
    conv3d_backward, conv3d_forward, dropout_backward, dropout_forward, relu, relu_backward,
    ConvGrads, ConvSpec, DropoutMask, Tensor,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: Tensor<T>) -> Tensor<T> {
        match self {
            Activation::Relu => relu(&x),
            Activation::Identity => x,
        }
    }

    /// Uniform init gain preserving activation variance through the layer:
    /// `sqrt(6)` ahead of ReLU, `sqrt(3)` for a linear layer.
    pub fn init_gain(self) -> f64 {
        match self {
            Activation::Relu => 6f64.sqrt(),
            Activation::Identity => 3f64.sqrt(),
        }
    }

    /// `y` is the activation output.
    pub fn backward<T: Scalar>(self, y: &Tensor<T>, grad: Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Activation::Relu => relu_backward(y, &grad),
            Activation::Identity => Ok(grad),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConvBlockCache<T> {
    pub input: Tensor<T>,
    pub activation: Activation,
    pub activated: Tensor<T>,
    pub mask: DropoutMask,
}

#[allow(clippy::too_many_arguments)]
pub fn conv_block_forward<T: Scalar, R: Rng + ?Sized>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    spec: &ConvSpec,
    activation: Activation,
    dropout_rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor<T>, ConvBlockCache<T>)> {
    let activated = activation.apply(conv3d_forward(input, weights, bias, spec)?);
    let (out, mask) = dropout_forward(&activated, dropout_rate, rng, training)?;
    Ok((
        out,
        ConvBlockCache {
            input: input.clone(),
            activation,
            activated,
            mask,
        },
    ))
}

pub fn conv_block_backward<T: Scalar>(
    weights: &Tensor<T>,
    spec: &ConvSpec,
    cache: &ConvBlockCache<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let g = dropout_backward(&cache.mask, grad_out)?;
    let g = cache.activation.backward(&cache.activated, g)?;
    conv3d_backward(&cache.input, weights, spec, &g)
}
