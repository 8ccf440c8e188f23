//! Dense tensors with tape-based reverse-mode automatic differentiation.
//!
//! [`Tensor`] is an immutable, contiguous, row-major n-dimensional array.
//! Differentiable computation is recorded on a [`Tape`]: leaves are either
//! plain inputs or [`Param`]s (named trainable tensors), every primitive
//! appends a node, and [`Tape::backward`] replays the record once in reverse.
//!
//! Storage is `f32` for training (checkpoints are `f32` little-endian);
//! reductions accumulate in `f64` regardless of the element type.

mod adam;
mod gradcheck;
pub(crate) mod kernels;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{grad_check, grad_check_primitive, GradCheckReport, SingleInput};
pub use kernels::Conv2dMeta;
pub use tape::{Gradients, Tape, Var};

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },
    #[error("data length {len} does not match shape {shape:?}")]
    LengthMismatch { len: usize, shape: Vec<usize> },
    #[error("loss must be a scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("tape was already consumed by a backward pass")]
    TapeConsumed,
    #[error("variables belong to different tapes")]
    TapeMismatch,
}

pub type Result<T> = std::result::Result<T, TensorError>;

pub(crate) fn shape_mismatch(op: &'static str, details: String) -> TensorError {
    TensorError::ShapeMismatch { op, details }
}

/// Immutable dense array; clones share the underlying buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::LengthMismatch {
                len: data.len(),
                shape,
            });
        }
        Ok(Self {
            shape,
            data: Arc::new(data),
        })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: impl Into<Vec<usize>>, v: T) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        Self {
            shape,
            data: Arc::new(vec![v; numel]),
        }
    }

    /// Single-element tensor of shape `[1]`.
    pub fn scalar(v: T) -> Self {
        Self {
            shape: vec![1],
            data: Arc::new(vec![v]),
        }
    }

    pub fn from_f64(shape: impl Into<Vec<usize>>, values: &[f64]) -> Result<Self> {
        Self::new(shape, values.iter().map(|&v| T::cast(v)).collect())
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Mutable view; copies the buffer if it is shared.
    pub fn data_mut(&mut self) -> &mut [T] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: Arc::new(self.data.iter().map(|&v| f(v)).collect()),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(shape_mismatch(
                op,
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            shape: self.shape.clone(),
            data: Arc::new(data),
        })
    }

    /// Reinterpret the shape without touching data (buffer is shared).
    pub fn reshaped(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(shape_mismatch(
                "reshape",
                format!("{:?} -> {:?}", self.shape, shape),
            ));
        }
        Ok(Self {
            shape,
            data: Arc::clone(&self.data),
        })
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::new(self.data.iter().map(|&v| U::cast(v.as_f64())).collect()),
        }
    }

    /// Sum of all elements, accumulated in `f64`.
    pub fn sum_f64(&self) -> f64 {
        self.data.iter().map(|&v| v.as_f64()).sum()
    }

    pub fn mean_f64(&self) -> f64 {
        if self.numel() == 0 {
            return 0.0;
        }
        self.sum_f64() / self.numel() as f64
    }

    pub fn min_value(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }
}

static NEXT_PARAM_ID: AtomicU64 = AtomicU64::new(0);

/// Identity of a trainable parameter within a process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(u64);

impl ParamId {
    pub(crate) fn raw(self) -> u64 {
        self.0
    }
}

/// A named trainable tensor. Mounting the same `Param` twice on one tape
/// yields the same node, so gradients from every use accumulate into one
/// buffer — weight sharing falls out of identity, not copying.
#[derive(Clone, Debug)]
pub struct Param<T> {
    id: ParamId,
    name: String,
    pub value: Tensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        Self {
            id: ParamId(NEXT_PARAM_ID.fetch_add(1, Ordering::Relaxed)),
            name: name.into(),
            value,
        }
    }

    #[inline]
    pub fn id(&self) -> ParamId {
        self.id
    }

    #[inline]
    pub fn name(&self) -> &str {
        &self.name
    }
}

/// Anything that exposes a flat, stably-ordered list of parameters.
pub trait Parametrized<T: Scalar> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.numel()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_length() {
        let err = Tensor::<f32>::new([2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, TensorError::LengthMismatch { .. }));
    }

    #[test]
    fn reshape_shares_buffer() {
        let t = Tensor::<f32>::new([2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let r = t.reshaped([3, 2]).unwrap();
        assert_eq!(r.data(), t.data());
        assert!(t.reshaped([4, 2]).is_err());
    }

    #[test]
    fn sum_accumulates_in_f64() {
        // 1e8 + 1.0 is not representable in f32; the f64 accumulator keeps it.
        let t = Tensor::<f32>::new([3], vec![1e8, 1.0, 1.0]).unwrap();
        assert_eq!(t.sum_f64(), 1e8 as f64 + 2.0);
    }

    #[test]
    fn params_have_unique_ids() {
        let a = Param::new("a", Tensor::<f32>::zeros([1]));
        let b = Param::new("b", Tensor::<f32>::zeros([1]));
        assert_ne!(a.id(), b.id());
    }
}
