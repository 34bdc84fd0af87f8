//! Dense row-major tensors and the numeric kernels the layers are built from.
//!
//! A single timestep is a 4-D `[channels, depth, height, width]` tensor and a
//! sequence adds a leading time axis. Every kernel here is a pure function of
//! its arguments and has a hand-written backward rule next to it.

mod conv;
mod dropout;
mod elementwise;
mod pool;

pub use conv::{
    conv1d_backward, conv1d_forward, conv3d_backward, conv3d_forward, output_extent, ConvGrads,
    ConvSpec,
};
pub use dropout::{dropout_backward, dropout_forward, DropoutMask};
pub use elementwise::{
    add, elementwise, hadamard, hadamard_backward, relu, relu_backward, scale, sigmoid,
    sigmoid_backward, tanh, tanh_backward, ElementwiseOp,
};
pub use pool::{global_spatial_avg_pool, global_spatial_avg_pool_backward};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAX_RANK: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.len() > MAX_RANK {
        return Err(Error::invalid(format!(
            "tensor rank must be in 1..={MAX_RANK}, got dims {dims:?}"
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::invalid(format!(
            "tensor extents must be >= 1, got dims {dims:?}"
        )));
    }
    Ok(dims.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let n = check_dims(dims)?;
        if n != data.len() {
            return Err(Error::invalid(format!(
                "dims {dims:?} need {n} elements, buffer holds {}",
                data.len()
            )));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    /// Panics on invalid dims; meant for shapes computed by the library itself.
    pub fn zeros(dims: &[usize]) -> Self {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: &[usize], value: T) -> Self {
        let n = check_dims(dims).expect("valid dims");
        Tensor {
            dims: dims.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = check_dims(dims).expect("valid dims");
        Tensor {
            dims: dims.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            dims: vec![1],
            data: vec![value],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims.len());
        index
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| {
                debug_assert!(i < d);
                acc * d + i
            })
    }

    pub fn get(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        let n = check_dims(dims)?;
        if n != self.data.len() {
            return Err(Error::invalid(format!(
                "cannot reshape {:?} into {dims:?}",
                self.dims
            )));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_same_dims(other)?;
        Ok(Tensor {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn expect_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::invalid(format!(
                "dims mismatch: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// In-place `self += other`.
    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        self.expect_same_dims(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, s: T) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, &x| if x.abs() > m { x.abs() } else { m })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&x| U::of(x.as_f64())).collect(),
        }
    }

    /// Number of elements in one slice along the leading axis.
    pub fn outer_stride(&self) -> usize {
        self.dims[1..].iter().product()
    }

    /// Copies out sub-tensor `i` along the leading axis.
    pub fn outer(&self, i: usize) -> Tensor<T> {
        assert!(self.rank() >= 2, "outer() needs rank >= 2");
        let s = self.outer_stride();
        Tensor {
            dims: self.dims[1..].to_vec(),
            data: self.data[i * s..(i + 1) * s].to_vec(),
        }
    }

    /// Contiguous range `[start, start + len)` along the leading axis.
    pub fn narrow_outer(&self, start: usize, len: usize) -> Result<Tensor<T>> {
        if len == 0 || start + len > self.dims[0] {
            return Err(Error::invalid(format!(
                "range [{start}, {}) outside leading extent {}",
                start + len,
                self.dims[0]
            )));
        }
        let s = self.outer_stride();
        let mut dims = self.dims.clone();
        dims[0] = len;
        Ok(Tensor {
            dims,
            data: self.data[start * s..(start + len) * s].to_vec(),
        })
    }

    /// Stacks equally-shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("cannot stack zero tensors"))?;
        if first.rank() >= MAX_RANK {
            return Err(Error::invalid("stacking would exceed the maximum rank"));
        }
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            first.expect_same_dims(t)?;
            data.extend_from_slice(&t.data);
        }
        let mut dims = vec![items.len()];
        dims.extend_from_slice(&first.dims);
        Ok(Tensor { dims, data })
    }

    /// Concatenates along the leading axis; trailing dims must agree.
    pub fn concat_outer(items: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("cannot concatenate zero tensors"))?;
        let mut lead = 0;
        let mut data = Vec::new();
        for t in items {
            if t.dims[1..] != first.dims[1..] {
                return Err(Error::invalid(format!(
                    "concat trailing dims mismatch: {:?} vs {:?}",
                    first.dims, t.dims
                )));
            }
            lead += t.dims[0];
            data.extend_from_slice(&t.data);
        }
        let mut dims = first.dims.clone();
        dims[0] = lead;
        Ok(Tensor { dims, data })
    }

    /// Splits along the leading axis into pieces of the given extents.
    pub fn split_outer(&self, extents: &[usize]) -> Result<Vec<Tensor<T>>> {
        if extents.iter().sum::<usize>() != self.dims[0] {
            return Err(Error::invalid(format!(
                "split extents {extents:?} do not cover leading extent {}",
                self.dims[0]
            )));
        }
        let s = self.outer_stride();
        let mut at = 0;
        extents
            .iter()
            .map(|&e| {
                let mut dims = self.dims.clone();
                dims[0] = e;
                let t = Tensor::new(&dims, self.data[at * s..(at + e) * s].to_vec());
                at += e;
                t
            })
            .collect()
    }

    /// Swaps the two axes of a rank-2 tensor.
    pub fn transpose2(&self) -> Result<Tensor<T>> {
        if self.rank() != 2 {
            return Err(Error::invalid(format!(
                "transpose2 needs a rank-2 tensor, got {:?}",
                self.dims
            )));
        }
        let (r, c) = (self.dims[0], self.dims[1]);
        let mut data = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor {
            dims: vec![c, r],
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dims() {
        assert!(Tensor::<f32>::new(&[2, 0], vec![]).is_err());
        assert!(Tensor::<f32>::new(&[2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::<f32>::new(&[1, 1, 1, 1, 1, 1], vec![0.0]).is_err());
        assert!(Tensor::<f32>::new(&[], vec![]).is_err());
    }

    #[test]
    fn row_major_last_axis_fastest() {
        let t = Tensor::<f64>::from_fn(&[2, 3, 4], |i| i as f64);
        assert_eq!(t.get(&[0, 0, 1]), 1.0);
        assert_eq!(t.get(&[0, 1, 0]), 4.0);
        assert_eq!(t.get(&[1, 0, 0]), 12.0);
    }

    #[test]
    fn stack_split_concat() {
        let a = Tensor::<f64>::from_fn(&[2, 2], |i| i as f64);
        let b = a.map(|x| -x);
        let s = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.dims(), &[2, 2, 2]);
        assert_eq!(s.outer(1), b);
        let c = Tensor::concat_outer(&[&a, &b]).unwrap();
        assert_eq!(c.dims(), &[4, 2]);
        let parts = c.split_outer(&[2, 2]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
        assert_eq!(c.narrow_outer(2, 2).unwrap().data(), b.data());
        assert!(c.narrow_outer(3, 2).is_err());
    }

    #[test]
    fn transpose_round_trip() {
        let a = Tensor::<f32>::from_fn(&[3, 5], |i| i as f32);
        let t = a.transpose2().unwrap();
        assert_eq!(t.get(&[4, 2]), a.get(&[2, 4]));
        assert_eq!(t.transpose2().unwrap(), a);
    }
}
