//! Bidirectional wrapper: one cell reads the sequence forwards, a second cell
//! with its own parameters reads it backwards, both from zero state. Output
//! step `t` is the channel concatenation `[H_t; H'_{T+1-t}]`.

use super::convlstm::{
    convlstm_backward_through_time, convlstm_sequence_forward, ConvLstmCache, ConvLstmParams,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub struct BiConvLstmCache<T> {
    forward: ConvLstmCache<T>,
    backward: ConvLstmCache<T>,
    hidden: usize,
}

pub struct BiConvLstmGrads<T> {
    pub input: Vec<Tensor<T>>,
    pub forward: ConvLstmParams<T>,
    pub backward: ConvLstmParams<T>,
}

pub fn bidirectional_forward<T: Scalar>(
    sequence: &[Tensor<T>],
    fwd: &ConvLstmParams<T>,
    bwd: &ConvLstmParams<T>,
) -> Result<(Vec<Tensor<T>>, BiConvLstmCache<T>)> {
    if sequence.is_empty() {
        return Err(Error::invalid("bidirectional ConvLSTM needs at least one step"));
    }
    if fwd.hidden() != bwd.hidden() {
        return Err(Error::invalid(format!(
            "forward hidden {} differs from backward hidden {}",
            fwd.hidden(),
            bwd.hidden()
        )));
    }
    let (hf, cache_f) = convlstm_sequence_forward(sequence, fwd)?;
    let reversed: Vec<Tensor<T>> = sequence.iter().rev().cloned().collect();
    let (hb, cache_b) = convlstm_sequence_forward(&reversed, bwd)?;
    let t_len = sequence.len();
    let out = (0..t_len)
        .map(|t| Tensor::concat_outer(&[&hf[t], &hb[t_len - 1 - t]]))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        out,
        BiConvLstmCache {
            forward: cache_f,
            backward: cache_b,
            hidden: fwd.hidden(),
        },
    ))
}

pub fn bidirectional_backward<T: Scalar>(
    fwd: &ConvLstmParams<T>,
    bwd: &ConvLstmParams<T>,
    cache: &BiConvLstmCache<T>,
    grad_out: &[Tensor<T>],
) -> Result<BiConvLstmGrads<T>> {
    let t_len = grad_out.len();
    if t_len != cache.forward.len() {
        return Err(Error::InvalidState(format!(
            "bidirectional cache holds {} steps, got {} gradients",
            cache.forward.len(),
            t_len
        )));
    }
    let h = cache.hidden;
    let mut gf = Vec::with_capacity(t_len);
    let mut gb = vec![None; t_len];
    for (t, g) in grad_out.iter().enumerate() {
        let mut parts = g.split_outer(&[h, h])?.into_iter();
        gf.push(parts.next().expect("forward half"));
        gb[t_len - 1 - t] = parts.next();
    }
    let gb: Vec<Tensor<T>> = gb.into_iter().map(|g| g.expect("filled")).collect();
    let (dx_f, grad_fwd) = convlstm_backward_through_time(fwd, &cache.forward, &gf)?;
    let (dx_b, grad_bwd) = convlstm_backward_through_time(bwd, &cache.backward, &gb)?;
    let input = (0..t_len)
        .map(|t| {
            let mut g = dx_f[t].clone();
            g.accumulate(&dx_b[t_len - 1 - t])?;
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BiConvLstmGrads {
        input,
        forward: grad_fwd,
        backward: grad_bwd,
    })
}

/// `[T, C, D, H, W]` → `[T, 2 * hidden, D, H, W]`.
pub fn bidirectional_convlstm<T: Scalar>(
    sequence: &Tensor<T>,
    fwd: &ConvLstmParams<T>,
    bwd: &ConvLstmParams<T>,
) -> Result<Tensor<T>> {
    if sequence.rank() != 5 {
        return Err(Error::invalid(format!(
            "sequence must be [T, C, D, H, W], got {:?}",
            sequence.dims()
        )));
    }
    let steps: Vec<Tensor<T>> = (0..sequence.dims()[0]).map(|t| sequence.outer(t)).collect();
    let (out, _) = bidirectional_forward(&steps, fwd, bwd)?;
    Tensor::stack(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reverse_time(t: &Tensor<f64>) -> Tensor<f64> {
        let steps: Vec<_> = (0..t.dims()[0]).rev().map(|i| t.outer(i)).collect();
        Tensor::stack(&steps).unwrap()
    }

    #[test]
    fn single_step_with_shared_params_has_equal_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = ConvLstmParams::<f64>::init(2, 3, 3, &mut rng);
        let x = Tensor::from_fn(&[1, 2, 2, 3, 2], |i| (i as f64 * 0.7).sin());
        let y = bidirectional_convlstm(&x, &p, &p).unwrap();
        assert_eq!(y.dims(), &[1, 6, 2, 3, 2]);
        let halves = y.outer(0).split_outer(&[3, 3]).unwrap();
        assert_eq!(halves[0], halves[1]);
    }

    #[test]
    fn time_reversal_swaps_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pf = ConvLstmParams::<f64>::init(1, 2, 3, &mut rng);
        let pb = ConvLstmParams::<f64>::init(1, 2, 3, &mut rng);
        let x = Tensor::from_fn(&[4, 1, 2, 2, 2], |i| (i as f64 * 1.3).cos());
        let y = bidirectional_convlstm(&x, &pf, &pb).unwrap();
        let y_rev = bidirectional_convlstm(&reverse_time(&x), &pb, &pf).unwrap();
        for t in 0..4 {
            let a = y.outer(t).split_outer(&[2, 2]).unwrap();
            let b = y_rev.outer(3 - t).split_outer(&[2, 2]).unwrap();
            assert_eq!(a[0], b[1]);
            assert_eq!(a[1], b[0]);
        }
    }

    #[test]
    fn empty_sequence_rejected() {
        let p = ConvLstmParams::<f64>::zeros(1, 2, 1);
        assert!(bidirectional_forward(&[], &p, &p).is_err());
    }
}
