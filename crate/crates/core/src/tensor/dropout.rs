use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Surviving positions of an inverted-dropout draw.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
    /// `1 / (1 - rate)`.
    pub scale: f64,
}

impl DropoutMask {
    pub fn identity(len: usize) -> Self {
        DropoutMask {
            keep: vec![true; len],
            scale: 1.0,
        }
    }

    pub fn kept_fraction(&self) -> f64 {
        self.keep.iter().filter(|&&k| k).count() as f64 / self.keep.len() as f64
    }
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` so evaluation is
/// the identity.
pub fn dropout_forward<T: Scalar, R: Rng + ?Sized>(
    input: &Tensor<T>,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor<T>, DropoutMask)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), DropoutMask::identity(input.len())));
    }
    let scale = 1.0 / (1.0 - rate);
    let keep: Vec<bool> = (0..input.len()).map(|_| rng.gen::<f64>() >= rate).collect();
    let s = T::of(scale);
    let data = input
        .data()
        .iter()
        .zip(&keep)
        .map(|(&x, &k)| if k { x * s } else { T::zero() })
        .collect();
    Ok((Tensor::new(input.dims(), data)?, DropoutMask { keep, scale }))
}

pub fn dropout_backward<T: Scalar>(mask: &DropoutMask, grad: &Tensor<T>) -> Result<Tensor<T>> {
    if mask.keep.len() != grad.len() {
        return Err(Error::invalid(format!(
            "dropout mask of {} entries vs grad {:?}",
            mask.keep.len(),
            grad.dims()
        )));
    }
    let s = T::of(mask.scale);
    let data = grad
        .data()
        .iter()
        .zip(&mask.keep)
        .map(|(&g, &k)| if k { g * s } else { T::zero() })
        .collect();
    Tensor::new(grad.dims(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_and_eval_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::<f32>::from_fn(&[4, 5], |i| i as f32);
        let (y, m) = dropout_forward(&x, 0.0, &mut rng, true).unwrap();
        assert_eq!(y, x);
        assert!(m.keep.iter().all(|&k| k));
        let (y, _) = dropout_forward(&x, 0.7, &mut rng, false).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn rate_out_of_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::<f32>::zeros(&[3]);
        assert!(dropout_forward(&x, 1.0, &mut rng, true).is_err());
        assert!(dropout_forward(&x, -0.1, &mut rng, true).is_err());
    }

    #[test]
    fn survival_fraction_and_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = Tensor::<f64>::full(&[100_000], 1.0);
        let (y, m) = dropout_forward(&x, 0.2, &mut rng, true).unwrap();
        let frac = m.kept_fraction();
        assert!((frac - 0.8).abs() <= 0.01, "kept {frac}");
        let mean = y.sum() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn backward_reuses_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f64>::full(&[50], 2.0);
        let (y, m) = dropout_forward(&x, 0.5, &mut rng, true).unwrap();
        let g = dropout_backward(&m, &Tensor::full(&[50], 1.0)).unwrap();
        for (gy, yy) in g.data().iter().zip(y.data()) {
            assert_eq!(*gy * 2.0, *yy);
        }
    }
}
