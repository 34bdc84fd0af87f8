use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `[C, D, H, W]` → `[C]`, the mean over every spatial position.
pub fn global_spatial_avg_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    if input.rank() != 4 {
        return Err(Error::invalid(format!(
            "global pooling expects [C, D, H, W], got {:?}",
            input.dims()
        )));
    }
    let c = input.dims()[0];
    let n = input.outer_stride();
    let inv = T::of(n as f64);
    let out = input
        .data()
        .chunks_exact(n)
        .map(|ch| ch.iter().copied().sum::<T>() / inv)
        .collect();
    Tensor::new(&[c], out)
}

pub fn global_spatial_avg_pool_backward<T: Scalar>(
    input_dims: &[usize],
    grad: &Tensor<T>,
) -> Result<Tensor<T>> {
    if input_dims.len() != 4 || grad.dims() != [input_dims[0]] {
        return Err(Error::invalid(format!(
            "pool grad {:?} does not match input {:?}",
            grad.dims(),
            input_dims
        )));
    }
    let n: usize = input_dims[1..].iter().product();
    let inv = T::of(n as f64);
    let mut out = Vec::with_capacity(input_dims[0] * n);
    for &g in grad.data() {
        out.extend(std::iter::repeat(g / inv).take(n));
    }
    Tensor::new(input_dims, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_mean() {
        let x = Tensor::<f64>::full(&[3, 2, 2, 2], 1.25);
        assert_eq!(global_spatial_avg_pool(&x).unwrap().data(), &[1.25; 3]);

        let y = Tensor::new(&[1, 1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_spatial_avg_pool(&y).unwrap().data(), &[2.5]);
    }

    #[test]
    fn backward_spreads_uniformly() {
        let g = Tensor::new(&[2], vec![1.0f64, -4.0]).unwrap();
        let gx = global_spatial_avg_pool_backward(&[2, 1, 2, 2], &g).unwrap();
        assert_eq!(gx.data(), &[0.25, 0.25, 0.25, 0.25, -1.0, -1.0, -1.0, -1.0]);
        assert_eq!(gx.outer(0).sum(), 1.0);
        assert_eq!(gx.outer(1).sum(), -4.0);
    }
}
