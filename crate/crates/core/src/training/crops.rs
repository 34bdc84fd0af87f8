use rand::Rng;

use crate::error::{Error, Result};
use crate::models::Network;
use crate::optim::softmax;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Uniform start index on `0..=T-L`.
pub fn sample_crop<R: Rng + ?Sized>(series_length: usize, crop_length: usize, rng: &mut R) -> Result<usize> {
    if crop_length == 0 || series_length < crop_length {
        return Err(Error::Data(format!(
            "cannot crop {crop_length} timesteps from a series of length {series_length}"
        )));
    }
    Ok(rng.gen_range(0..=series_length - crop_length))
}

/// Non-overlapping starts `0, L, 2L, ...` plus a tail crop ending at `T`
/// when `L` does not divide `T`.
pub fn crop_starts(series_length: usize, crop_length: usize) -> Result<Vec<usize>> {
    if crop_length == 0 || series_length < crop_length {
        return Err(Error::Data(format!(
            "cannot crop {crop_length} timesteps from a series of length {series_length}"
        )));
    }
    let mut starts: Vec<usize> = (0..series_length / crop_length).map(|i| i * crop_length).collect();
    if series_length % crop_length != 0 {
        starts.push(series_length - crop_length);
    }
    Ok(starts)
}

/// Mean of the per-crop softmax outputs over the tiled crops of `series`.
pub fn evaluate_subject<T: Scalar>(network: &Network<T>, series: &Tensor<T>, crop_length: usize) -> Result<Tensor<T>> {
    let starts = crop_starts(series.dims()[0], crop_length)?;
    let mut total: Option<Tensor<T>> = None;
    for &s in &starts {
        let p = softmax(&network.logits(&series.narrow_outer(s, crop_length)?)?);
        match total.as_mut() {
            Some(t) => t.accumulate(&p)?,
            None => total = Some(p),
        }
    }
    let mut mean = total.expect("at least one crop");
    mean.data_mut().iter_mut().for_each(|v| *v /= T::of(starts.len() as f64));
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tiling() {
        assert_eq!(crop_starts(40, 20).unwrap(), [0, 20]);
        assert_eq!(crop_starts(50, 20).unwrap(), [0, 20, 30]);
        assert_eq!(crop_starts(20, 20).unwrap(), [0]);
        assert!(crop_starts(19, 20).is_err());
        assert!(crop_starts(5, 0).is_err());
    }

    #[test]
    fn sampled_starts_cover_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen = [false; 6];
        for _ in 0..500 {
            seen[sample_crop(25, 20, &mut rng).unwrap()] = true;
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(sample_crop(20, 20, &mut rng).unwrap(), 0);
        assert!(sample_crop(3, 4, &mut rng).is_err());
    }
}
