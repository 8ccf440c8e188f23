//! Scalar abstraction: the numeric code is generic over `f32`/`f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Floating-point element type of tensors and model parameters.
///
/// `f32` is the training dtype (checkpoints store `f32` payloads); `f64`
/// instantiations are used where precision matters more than speed, e.g.
/// finite-difference gradient checks.
pub trait Scalar:
    Float + FromPrimitive + NumAssignOps + Sum + Send + Sync + Debug + Display + 'static
{
    fn cast(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn as_f32(self) -> f32;
}

impl Scalar for f32 {
    #[inline]
    fn cast(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn as_f32(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    #[inline]
    fn cast(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline]
    fn as_f32(self) -> f32 {
        self as f32
    }
}
