//! Softmax cross-entropy and the Adam optimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelParams;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Returns `-log softmax(logits)[label]` and its gradient `softmax - onehot(label)`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, label: usize) -> Result<(T, Tensor<T>)> {
    if logits.rank() != 1 || logits.is_empty() {
        return Err(Error::invalid(format!(
            "logits must be a non-empty vector, got dims {:?}",
            logits.dims()
        )));
    }
    let k = logits.len();
    if label >= k {
        return Err(Error::invalid(format!("label {label} out of range for {k} classes")));
    }
    let probs = softmax(logits);
    let z = logits.data();
    let max = z.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let log_sum = z.iter().map(|&v| (v - max).exp()).fold(T::zero(), |a, b| a + b).ln();
    let loss = log_sum - (z[label] - max);
    let mut grad = probs;
    grad.data_mut()[label] -= T::one();
    Ok((loss, grad))
}

/// Numerically stable softmax of a vector.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let z = logits.data();
    let max = z.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let e: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum = e.iter().fold(T::zero(), |a, &b| a + b);
    Tensor::new(logits.dims(), e.into_iter().map(|v| v / sum).collect()).expect("same length")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid Adam hyperparameters {self:?}")))
        }
    }
}

/// Moment estimates for every parameter path. Updates are computed in 64-bit
/// and rounded to the parameter precision.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &ModelParams<T>) -> Result<Self> {
        config.validate()?;
        Ok(AdamState {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        })
    }

    /// One bias-corrected Adam update of every parameter.
    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) -> Result<()> {
        for path in params.paths() {
            let (p, g) = (params.get(path)?, grads.get(path).map_err(|_| {
                Error::invalid(format!("gradient for parameter {path:?} is missing"))
            })?);
            if p.dims() != g.dims() {
                return Err(Error::invalid(format!(
                    "gradient for {path:?} has dims {:?}, parameter has {:?}",
                    g.dims(),
                    p.dims()
                )));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (path, p) in params.iter_mut() {
            let g = grads.get(path)?.data();
            let m = self.m.get_mut(path)?.data_mut();
            let v = self.v.get_mut(path)?.data_mut();
            for (i, x) in p.data_mut().iter_mut().enumerate() {
                let gi = g[i].as_f64();
                let mi = beta1 * m[i].as_f64() + (1.0 - beta1) * gi;
                let vi = beta2 * v[i].as_f64() + (1.0 - beta2) * gi * gi;
                m[i] = T::of(mi);
                v[i] = T::of(vi);
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + epsilon);
                *x = T::of(x.as_f64() - update);
            }
        }
        Ok(())
    }
}
