//! Forward and backward kernels on plain tensors. The tape in
//! [`crate::autograd`] composes these; inference paths may call them directly.

pub(crate) mod conv;
mod shuffle;

pub use conv::{conv2d, conv2d_transpose};
pub use shuffle::{pixel_shuffle, space_to_depth};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub fn matmul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let ([m, k1], [k2, n]) = (a.shape(), b.shape()) else {
        return Err(Error::shape("matmul", "two rank-2 operands", &[a.rank(), b.rank()]));
    };
    let (m, k, n) = (*m, *k1, *n);
    if k != *k2 {
        return Err(Error::shape("matmul", format!("right operand with {k} rows"), b.shape()));
    }
    let mut out = vec![T::zero(); m * n];
    T::gemm(m, k, n, T::one(), a.data(), false, b.data(), false, T::zero(), &mut out);
    Tensor::from_vec(&[m, n], out)
}

pub fn relu<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

