use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ElementwiseOp {
    Sigmoid,
    Tanh,
    Relu,
    Add,
    Hadamard,
    /// Multiply by a constant.
    Scale(f64),
}

/// Dispatches a named elementwise op. Binary ops require `b`.
pub fn elementwise<T: Scalar>(op: ElementwiseOp, a: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let rhs = || b.ok_or_else(|| Error::invalid(format!("{op:?} needs a second operand")));
    match op {
        ElementwiseOp::Sigmoid => Ok(sigmoid(a)),
        ElementwiseOp::Tanh => Ok(tanh(a)),
        ElementwiseOp::Relu => Ok(relu(a)),
        ElementwiseOp::Add => add(a, rhs()?),
        ElementwiseOp::Hadamard => hadamard(a, rhs()?),
        ElementwiseOp::Scale(s) => Ok(scale(a, T::of(s))),
    }
}

#[inline]
pub(crate) fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub fn sigmoid<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    a.map(sigmoid_scalar)
}

pub fn tanh<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    a.map(|x| x.tanh())
}

pub fn relu<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    a.map(|x| if x > T::zero() { x } else { T::zero() })
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.zip_map(b, |x, y| x + y)
}

pub fn hadamard<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.zip_map(b, |x, y| x * y)
}

pub fn scale<T: Scalar>(a: &Tensor<T>, s: T) -> Tensor<T> {
    a.map(|x| x * s)
}

/// Backward of sigmoid expressed through its output `y`.
pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    y.zip_map(grad, |y, g| g * y * (T::one() - y))
}

/// Backward of tanh expressed through its output `y`.
pub fn tanh_backward<T: Scalar>(y: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    y.zip_map(grad, |y, g| g * (T::one() - y * y))
}

/// Backward of relu expressed through its output.
pub fn relu_backward<T: Scalar>(y: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    y.zip_map(grad, |y, g| if y > T::zero() { g } else { T::zero() })
}

/// Gradients of `a ⊙ b` with respect to `a` and `b`.
pub fn hadamard_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    grad: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    Ok((hadamard(grad, b)?, hadamard(grad, a)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::new(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn basic_values() {
        assert_eq!(sigmoid(&t(&[0.0])).data(), &[0.5]);
        assert_eq!(tanh(&t(&[0.0])).data(), &[0.0]);
        let a = t(&[1.0, -2.0, 3.5]);
        assert_eq!(hadamard(&a, &t(&[1.0, 1.0, 1.0])).unwrap(), a);
        assert_eq!(scale(&a, 2.0).data(), &[2.0, -4.0, 7.0]);
        assert_eq!(relu(&a).data(), &[1.0, 0.0, 3.5]);
    }

    #[test]
    fn binary_dims_mismatch() {
        assert!(add(&t(&[1.0]), &t(&[1.0, 2.0])).is_err());
        assert!(elementwise(ElementwiseOp::Hadamard, &t(&[1.0]), None).is_err());
    }

    #[test]
    fn sigmoid_derivative_matches_central_difference() {
        let h = 1e-5;
        for &x in &[-2.0f64, 0.0, 3.0] {
            let y = sigmoid(&t(&[x]));
            let analytic = sigmoid_backward(&y, &t(&[1.0])).unwrap().data()[0];
            let numeric = (sigmoid_scalar(x + h) - sigmoid_scalar(x - h)) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
            assert!(rel <= 1e-8, "x={x} rel={rel:e}");
        }
    }

    #[test]
    fn tanh_derivative_matches_central_difference() {
        let h = 1e-5;
        for &x in &[-1.5f64, 0.2, 2.0] {
            let y = tanh(&t(&[x]));
            let analytic = tanh_backward(&y, &t(&[1.0])).unwrap().data()[0];
            let numeric = ((x + h).tanh() - (x - h).tanh()) / (2.0 * h);
            assert!((analytic - numeric).abs() / numeric.abs() <= 1e-8);
        }
    }
}
