//! The outcome-noise transform.
//!
//! `U_Y' ~ Normal(0, variance)` is easy to sample; the fixed transform
//! `g(u) = (u mod 1) + 1` folds it into `[1, 2)`. Multiplying feature maps by
//! values in `[1, 2)` perturbs them without ever zeroing an activation.

use crate::rng::StreamRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Default variance of the pre-transform normal. The second parameter of the
/// sampler is interpreted as a *variance*; it is configurable because either
/// reading lands in `[1, 2)` after the fold.
pub const DEFAULT_NOISE_VARIANCE: f64 = 0.25;

/// Sample a `U_Y` tensor: elementwise `normal(0, var) mod 1 + 1`.
pub fn sample_noise<T: Scalar>(rng: &mut StreamRng, shape: &[usize], variance: f64) -> Tensor<T> {
    let std = variance.sqrt();
    let numel: usize = shape.iter().product();
    let values: Vec<f64> = (0..numel)
        .map(|_| rng.normal(0.0, std).rem_euclid(1.0) + 1.0)
        .collect();
    Tensor::from_f64(shape.to_vec(), &values).expect("noise shape")
}
