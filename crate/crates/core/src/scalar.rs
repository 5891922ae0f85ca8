//! Scalar abstraction: all numeric kernels are generic over `f32`/`f64`.
//!
//! Training runs in `f32`; finite-difference gradient checks instantiate the
//! same code paths in `f64`.

use std::fmt::{Debug, Display};

/// Floating-point element type usable in tensors and autodiff kernels.
pub trait Scalar:
    num_traits::Float
    + num_traits::NumAssignOps
    + ndarray::LinalgScalar
    + Send
    + Sync
    + Debug
    + Display
    + 'static
{
    fn from_f(x: f64) -> Self;
    fn to_f(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f(self) -> f64 {
        self
    }
}
