use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `[T, F]` → `[F]`, the arithmetic mean over time.
pub fn temporal_mean_pool<T: Scalar>(sequence: &Tensor<T>) -> Result<Tensor<T>> {
    if sequence.rank() != 2 {
        return Err(Error::invalid(format!(
            "temporal pooling expects [T, F], got {:?}",
            sequence.dims()
        )));
    }
    let (t, f) = (sequence.dims()[0], sequence.dims()[1]);
    let mut acc = vec![T::zero(); f];
    for row in sequence.data().chunks_exact(f) {
        for (a, &x) in acc.iter_mut().zip(row) {
            *a += x;
        }
    }
    let n = T::of(t as f64);
    Tensor::new(&[f], acc.into_iter().map(|a| a / n).collect())
}

pub fn temporal_mean_pool_backward<T: Scalar>(steps: usize, grad: &Tensor<T>) -> Result<Tensor<T>> {
    if steps == 0 || grad.rank() != 1 {
        return Err(Error::invalid(format!(
            "temporal pooling backward needs T >= 1 and a [F] grad, got T={steps}, {:?}",
            grad.dims()
        )));
    }
    let n = T::of(steps as f64);
    let row: Vec<T> = grad.data().iter().map(|&g| g / n).collect();
    Tensor::new(&[steps, grad.len()], row.repeat(steps))
}
