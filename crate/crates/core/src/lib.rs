//! Deep twin-network counterfactual generation toolkit.
//!
//! The crate is organized in two halves that mirror the theory/practice split
//! of the method:
//!
//! - An **exact inference core** for discrete structural causal models:
//!   [`scm`] represents models and interventions, [`twin`] builds twin
//!   networks and answers counterfactual queries two independent ways
//!   (twin-network enumeration and abduction-action-prediction), which
//!   cross-validate each other.
//! - A **neural twin** for the continuous case: [`tensor`] is a dense
//!   tape-based reverse-mode autodiff engine, [`nn`] holds the four networks
//!   (shared-weight twin generator, expert regressor, multiscale frame
//!   discriminator, vector-quantized autoencoder), [`data`] generates
//!   controllable synthetic datasets and ingests real frame sequences,
//!   [`training`] runs the scheduled three-loss training procedures and
//!   [`metrics`] produces the evaluation reports.
//!
//! All numeric code is generic over the scalar type via [`Scalar`]
//! (`f32`/`f64`); training and checkpoints use `f32`, while verification
//! paths (finite-difference gradient checks) may instantiate `f64`.

pub mod checkpoint;
pub mod data;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod scm;
pub mod tensor;
pub mod training;
pub mod twin;

pub use scalar::Scalar;

/// Default training dtype.
pub type Tensor32 = tensor::Tensor<f32>;
/// High-precision dtype used by verification paths.
pub type Tensor64 = tensor::Tensor<f64>;
pub type Tape32 = tensor::Tape<f32>;
pub type Param32 = tensor::Param<f32>;
