//! 3-D (and, as a degenerate case, 1-D) zero-padded cross-correlation.
//!
//! The forward pass lowers the padded input to a column matrix of shape
//! `[C_in * kd * kh * kw, D' * H' * W']` and multiplies it by the flattened
//! kernel. Each output scalar accumulates `bias + sum(w * x)` in
//! `(c, i, j, k)` order, which is the same order as the naive nested loop, so
//! 64-bit results agree with it exactly.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `floor((n + 2p - k) / s) + 1`, or `None` when the kernel does not fit.
pub fn output_extent(n: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if n == 0 || kernel == 0 || stride == 0 || n + 2 * padding < kernel {
        return None;
    }
    Some((n + 2 * padding - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    /// Isotropic kernel, stride and padding.
    pub fn cubic(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        ConvSpec {
            kernel: [kernel; 3],
            stride: [stride; 3],
            padding: [padding; 3],
            in_channels,
            out_channels,
        }
    }

    /// Stride 1 with `(k - 1) / 2` zeros per side; extent preserving for odd `k`.
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self::cubic(in_channels, out_channels, kernel, 1, (kernel - 1) / 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::invalid(format!(
                "channel counts must be >= 1, got {} -> {}",
                self.in_channels, self.out_channels
            )));
        }
        if self.kernel.contains(&0) || self.stride.contains(&0) {
            return Err(Error::invalid(format!(
                "kernel {:?} and stride {:?} must be >= 1",
                self.kernel, self.stride
            )));
        }
        Ok(())
    }

    pub fn output_spatial(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        self.validate()?;
        let mut out = [0; 3];
        for a in 0..3 {
            out[a] = output_extent(input[a], self.kernel[a], self.stride[a], self.padding[a])
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "input spatial {input:?} with kernel {:?}, stride {:?}, padding {:?} \
                         yields an empty output",
                        self.kernel, self.stride, self.padding
                    ))
                })?;
        }
        Ok(out)
    }

    pub fn weight_dims(&self) -> [usize; 5] {
        [
            self.out_channels,
            self.in_channels,
            self.kernel[0],
            self.kernel[1],
            self.kernel[2],
        ]
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel.iter().product::<usize>()
    }

    fn check_operands<T: Scalar>(
        &self,
        input: &Tensor<T>,
        weights: &Tensor<T>,
    ) -> Result<([usize; 3], [usize; 3])> {
        self.validate()?;
        let d = input.dims();
        if d.len() != 4 || d[0] != self.in_channels {
            return Err(Error::invalid(format!(
                "input {:?} does not match weights {:?} (expected [{}, D, H, W])",
                d,
                weights.dims(),
                self.in_channels
            )));
        }
        if weights.dims() != self.weight_dims() {
            return Err(Error::invalid(format!(
                "weights {:?} do not match input {:?} under spec (expected {:?})",
                weights.dims(),
                d,
                self.weight_dims()
            )));
        }
        let in_sp = [d[1], d[2], d[3]];
        Ok((in_sp, self.output_spatial(in_sp)?))
    }
}

/// Geometry shared by the lowering and its adjoint.
struct Lowering {
    c_in: usize,
    in_sp: [usize; 3],
    out_sp: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    padding: [usize; 3],
}

impl Lowering {
    fn rows(&self) -> usize {
        self.c_in * self.kernel.iter().product::<usize>()
    }

    fn cols(&self) -> usize {
        self.out_sp.iter().product()
    }

    /// Source coordinate along axis `a` for output `o` and kernel tap `t`.
    #[inline]
    fn source(&self, a: usize, o: usize, t: usize) -> Option<usize> {
        let pos = (o * self.stride[a] + t) as isize - self.padding[a] as isize;
        if pos < 0 || pos >= self.in_sp[a] as isize {
            None
        } else {
            Some(pos as usize)
        }
    }

    /// Calls `f(row, col, input_offset)` for every in-bounds tap.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let [id, ih, iw] = self.in_sp;
        let [od, oh, ow] = self.out_sp;
        let [kd, kh, kw] = self.kernel;
        let mut row = 0;
        for c in 0..self.c_in {
            let cbase = c * id * ih * iw;
            for i in 0..kd {
                for j in 0..kh {
                    for k in 0..kw {
                        for z in 0..od {
                            let Some(sz) = self.source(0, z, i) else { continue };
                            for y in 0..oh {
                                let Some(sy) = self.source(1, y, j) else { continue };
                                let src_row = cbase + (sz * ih + sy) * iw;
                                let col_row = (z * oh + y) * ow;
                                for x in 0..ow {
                                    if let Some(sx) = self.source(2, x, k) {
                                        f(row, col_row + x, src_row + sx);
                                    }
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }

    fn im2col<T: Scalar>(&self, input: &[T]) -> Vec<T> {
        let p = self.cols();
        let mut col = vec![T::zero(); self.rows() * p];
        self.for_each_tap(|r, c, src| col[r * p + c] = input[src]);
        col
    }

    fn col2im<T: Scalar>(&self, col: &[T]) -> Vec<T> {
        let p = self.cols();
        let mut out = vec![T::zero(); self.c_in * self.in_sp.iter().product::<usize>()];
        self.for_each_tap(|r, c, dst| out[dst] += col[r * p + c]);
        out
    }
}

fn lowering(spec: &ConvSpec, in_sp: [usize; 3], out_sp: [usize; 3]) -> Lowering {
    Lowering {
        c_in: spec.in_channels,
        in_sp,
        out_sp,
        kernel: spec.kernel,
        stride: spec.stride,
        padding: spec.padding,
    }
}

/// `input [C_in, D, H, W]`, `weights [C_out, C_in, kd, kh, kw]`, `bias [C_out]`.
pub fn conv3d_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let (in_sp, out_sp) = spec.check_operands(input, weights)?;
    if bias.dims() != [spec.out_channels] {
        return Err(Error::invalid(format!(
            "bias {:?} does not match weights {:?}",
            bias.dims(),
            weights.dims()
        )));
    }
    let low = lowering(spec, in_sp, out_sp);
    let col = low.im2col(input.data());
    let (k_rows, p) = (low.rows(), low.cols());
    let w = weights.data();
    let mut out = vec![T::zero(); spec.out_channels * p];
    for (o, row) in out.chunks_exact_mut(p).enumerate() {
        row.fill(bias.data()[o]);
        let w_row = &w[o * k_rows..(o + 1) * k_rows];
        for (kr, &wv) in w_row.iter().enumerate() {
            let c_row = &col[kr * p..(kr + 1) * p];
            for (acc, &x) in row.iter_mut().zip(c_row) {
                *acc += wv * x;
            }
        }
    }
    Tensor::new(
        &[spec.out_channels, out_sp[0], out_sp[1], out_sp[2]],
        out,
    )
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv3d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    spec: &ConvSpec,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let (in_sp, out_sp) = spec.check_operands(input, weights)?;
    let expected = [spec.out_channels, out_sp[0], out_sp[1], out_sp[2]];
    if grad_out.dims() != expected {
        return Err(Error::invalid(format!(
            "grad_out {:?} does not match forward output {:?}",
            grad_out.dims(),
            expected
        )));
    }
    let low = lowering(spec, in_sp, out_sp);
    let col = low.im2col(input.data());
    let (k_rows, p) = (low.rows(), low.cols());
    let w = weights.data();
    let g = grad_out.data();

    let mut grad_w = vec![T::zero(); w.len()];
    let mut grad_b = vec![T::zero(); spec.out_channels];
    let mut grad_col = vec![T::zero(); k_rows * p];
    for o in 0..spec.out_channels {
        let g_row = &g[o * p..(o + 1) * p];
        grad_b[o] = g_row.iter().copied().sum();
        for kr in 0..k_rows {
            let c_row = &col[kr * p..(kr + 1) * p];
            grad_w[o * k_rows + kr] = g_row
                .iter()
                .zip(c_row)
                .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            let wv = w[o * k_rows + kr];
            for (gc, &gv) in grad_col[kr * p..(kr + 1) * p].iter_mut().zip(g_row) {
                *gc += wv * gv;
            }
        }
    }
    Ok(ConvGrads {
        input: Tensor::new(input.dims(), low.col2im(&grad_col))?,
        weights: Tensor::new(weights.dims(), grad_w)?,
        bias: Tensor::new(&[spec.out_channels], grad_b)?,
    })
}

fn conv1d_spec(weights: &Tensor<impl Scalar>, stride: usize, padding: usize) -> Result<ConvSpec> {
    let d = weights.dims();
    if d.len() != 3 {
        return Err(Error::invalid(format!(
            "1-D weights must be [C_out, C_in, k], got {d:?}"
        )));
    }
    Ok(ConvSpec {
        kernel: [1, 1, d[2]],
        stride: [1, 1, stride],
        padding: [0, 0, padding],
        in_channels: d[1],
        out_channels: d[0],
    })
}

fn lift_1d<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let d = input.dims();
    if d.len() != 2 {
        return Err(Error::invalid(format!(
            "1-D input must be [C_in, T], got {d:?} (weights {:?})",
            weights.dims()
        )));
    }
    let wd = weights.dims();
    Ok((
        input.clone().reshape(&[d[0], 1, 1, d[1]])?,
        weights.clone().reshape(&[wd[0], wd[1], 1, 1, wd[2]])?,
    ))
}

/// `input [C_in, T]`, `weights [C_out, C_in, k]` → `[C_out, T']`.
pub fn conv1d_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let spec = conv1d_spec(weights, stride, padding)?;
    let (x, w) = lift_1d(input, weights)?;
    let out = conv3d_forward(&x, &w, bias, &spec)?;
    let len = out.dims()[3];
    out.reshape(&[spec.out_channels, len])
}

pub fn conv1d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    stride: usize,
    padding: usize,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let spec = conv1d_spec(weights, stride, padding)?;
    let (x, w) = lift_1d(input, weights)?;
    let gd = grad_out.dims();
    if gd.len() != 2 {
        return Err(Error::invalid(format!(
            "1-D grad_out must be [C_out, T'], got {gd:?}"
        )));
    }
    let g = grad_out.clone().reshape(&[gd[0], 1, 1, gd[1]])?;
    let grads = conv3d_backward(&x, &w, &spec, &g)?;
    Ok(ConvGrads {
        input: grads.input.reshape(input.dims())?,
        weights: grads.weights.reshape(weights.dims())?,
        bias: grads.bias,
    })
}
