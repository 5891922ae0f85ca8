//! Dense row-major tensors.
//!
//! Values are immutable once wrapped in a tensor; clones share the underlying
//! buffer. Rank is arbitrary for storage, but the autodiff ops treat every
//! tensor as a matrix (vectors are `1 x n` rows, scalars `1 x 1`).

use std::sync::Arc;

use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Arc<Vec<S>>,
}

impl<S: Scalar> Tensor<S> {
    pub fn from_vec(shape: Vec<usize>, data: Vec<S>) -> Self {
        let count: usize = shape.iter().product();
        assert_eq!(
            count,
            data.len(),
            "shape {:?} does not match {} values",
            shape,
            data.len()
        );
        Tensor {
            shape,
            data: Arc::new(data),
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<S>) -> Self {
        Self::from_vec(vec![rows, cols], data)
    }

    /// A `1 x n` row vector.
    pub fn row(data: Vec<S>) -> Self {
        let n = data.len();
        Self::from_vec(vec![1, n], data)
    }

    pub fn scalar(v: S) -> Self {
        Self::from_vec(vec![1, 1], vec![v])
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::matrix(rows, cols, vec![S::zero(); rows * cols])
    }

    pub fn full(rows: usize, cols: usize, v: S) -> Self {
        Self::matrix(rows, cols, vec![v; rows * cols])
    }

    /// Standard-normal samples. Draws are made in f64 so that f32 and f64
    /// instantiations consume the RNG stream identically.
    pub fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| S::from_f(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Self::matrix(rows, cols, data)
    }

    /// Uniform samples on `[-bound, bound]`, drawn in f64 (see `randn`).
    pub fn rand_uniform(rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| S::from_f(rng.gen_range(-bound..=bound)))
            .collect();
        Self::matrix(rows, cols, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows when viewed as a matrix (rank-1 tensors are a single row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[..self.shape.len() - 1].iter().product(),
        }
    }

    /// Columns when viewed as a matrix.
    pub fn cols(&self) -> usize {
        match self.shape.last() {
            Some(&c) => c,
            None => 1,
        }
    }

    pub fn at(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols() + c]
    }

    pub fn item(&self) -> S {
        assert_eq!(self.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn same_shape(&self, other: &Tensor<S>) -> bool {
        self.rows() == other.rows() && self.cols() == other.cols()
    }

    pub fn map(&self, mut f: impl FnMut(S) -> S) -> Tensor<S> {
        Tensor::from_vec(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Tensor<S>, f: impl Fn(S, S) -> S) -> Tensor<S> {
        debug_assert_eq!(self.len(), other.len());
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Tensor::from_vec(self.shape.clone(), data)
    }

    /// In-place accumulation; copies the buffer only when shared.
    pub fn accumulate(&mut self, other: &Tensor<S>) {
        debug_assert_eq!(self.len(), other.len());
        let buf = Arc::make_mut(&mut self.data);
        for (a, &b) in buf.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn scale(&self, k: S) -> Tensor<S> {
        self.map(|v| v * k)
    }

    pub fn transpose(&self) -> Tensor<S> {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![S::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::matrix(c, r, out)
    }

    /// Matrix product via gemm.
    pub fn matmul(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("({m}x{k}) * ({k2}x{n})"),
            ));
        }
        let mut out = vec![S::zero(); m * n];
        {
            let a = ArrayView2::from_shape((m, k), self.data()).expect("lhs view");
            let b = ArrayView2::from_shape((k, n), other.data()).expect("rhs view");
            let mut c = ArrayViewMut2::from_shape((m, n), &mut out[..]).expect("out view");
            ndarray::linalg::general_mat_mul(S::one(), &a, &b, S::zero(), &mut c);
        }
        Ok(Tensor::matrix(m, n, out))
    }

    /// Sum over rows, yielding a `1 x cols` row.
    pub fn sum_rows(&self) -> Tensor<S> {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![S::zero(); c];
        for i in 0..r {
            for j in 0..c {
                out[j] += self.data[i * c + j];
            }
        }
        Tensor::row(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|v| {
                let x = v.to_f();
                x * x
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_vec(
            self.shape.clone(),
            self.data.iter().map(|v| T::from_f(v.to_f())).collect(),
        )
    }

    /// Reinterpret the buffer under a new shape with the same element count.
    pub fn reshaped(&self, shape: Vec<usize>) -> Tensor<S> {
        let count: usize = shape.iter().product();
        assert_eq!(count, self.len(), "reshape {:?} on {} values", shape, self.len());
        Tensor {
            shape,
            data: Arc::clone(&self.data),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn matmul_identity() {
        let x = Tensor::<f64>::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let id = Tensor::<f64>::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let y = x.matmul(&id).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn matmul_shape_error() {
        let a = Tensor::<f32>::zeros(2, 3);
        let b = Tensor::<f32>::zeros(2, 3);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn transpose_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f64>::randn(3, 5, &mut rng);
        let y = x.transpose().transpose();
        assert_eq!(x.data(), y.data());
    }

    #[test]
    fn rng_stream_matches_across_scalar_types() {
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let a = Tensor::<f32>::randn(2, 2, &mut r1);
        let b = Tensor::<f64>::randn(2, 2, &mut r2);
        for (x, y) in a.data().iter().zip(b.data().iter()) {
            assert_eq!(*x, *y as f32);
        }
    }
}
