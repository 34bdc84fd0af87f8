use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize)> {
    let wd = weights.dims();
    if input.rank() != 1 || wd.len() != 2 || wd[1] != input.len() {
        return Err(Error::invalid(format!(
            "dense weights {:?} incompatible with input {:?}",
            wd,
            input.dims()
        )));
    }
    Ok((wd[0], wd[1]))
}

/// `weights [K, F] · input [F] + bias [K]`.
pub fn dense_forward<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (k, f) = check(input, weights)?;
    if bias.dims() != [k] {
        return Err(Error::invalid(format!(
            "dense bias {:?} incompatible with weights {:?}",
            bias.dims(),
            weights.dims()
        )));
    }
    let x = input.data();
    let out = weights
        .data()
        .chunks_exact(f)
        .zip(bias.data())
        .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &v)| acc + w * v))
        .collect();
    Tensor::new(&[k], out)
}

pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    let (k, f) = check(input, weights)?;
    if grad_out.dims() != [k] {
        return Err(Error::invalid(format!(
            "dense grad {:?} incompatible with weights {:?}",
            grad_out.dims(),
            weights.dims()
        )));
    }
    let x = input.data();
    let g = grad_out.data();
    let mut gx = vec![T::zero(); f];
    let mut gw = Vec::with_capacity(k * f);
    for (row, &go) in weights.data().chunks_exact(f).zip(g) {
        for ((gxi, &w), &xi) in gx.iter_mut().zip(row).zip(x) {
            *gxi += w * go;
            gw.push(go * xi);
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(&[f], gx)?,
        weights: Tensor::new(&[k, f], gw)?,
        bias: grad_out.clone(),
    })
}
