//! Finite-difference verification of the backward pass.
//!
//! Central differences with a configurable step compare the analytic
//! gradient of a scalar loss against `(f(p+eps) - f(p-eps)) / 2eps`,
//! coordinate by coordinate (a deterministic sample for large tensors).

use crate::rng::StreamRng;
use crate::scalar::Scalar;

use super::{Param, Parametrized, Result, Tape, Tensor, Var};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked_coords: usize,
    /// Parameter name and coordinate of the worst deviation.
    pub worst: Option<(String, usize)>,
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

/// Check the analytic gradients of `loss_fn` (which must be deterministic in
/// the model parameters) against central differences. Parameters are
/// perturbed in place and restored.
pub fn grad_check<T, M, F>(
    model: &mut M,
    loss_fn: F,
    eps: f64,
    coords_per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    T: Scalar,
    M: Parametrized<T>,
    F: Fn(&M, &Tape<T>) -> Result<Var<T>>,
{
    let tape = Tape::new();
    let loss = loss_fn(model, &tape)?;
    let grads = tape.backward(&loss)?;
    let analytic: Vec<(String, Vec<f64>)> = model
        .params()
        .iter()
        .map(|p| {
            (
                p.name().to_string(),
                grads.for_param(p).data().iter().map(|&g| g.as_f64()).collect(),
            )
        })
        .collect();

    let mut rng = StreamRng::new(seed, "grad-check");
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked_coords: 0,
        worst: None,
    };

    for (pi, (name, grad)) in analytic.iter().enumerate() {
        let numel = grad.len();
        let coords: Vec<usize> = if numel <= coords_per_tensor {
            (0..numel).collect()
        } else {
            (0..coords_per_tensor).map(|_| rng.below(numel)).collect()
        };
        for &ci in &coords {
            let original = model.params()[pi].value.data()[ci];
            model.params_mut()[pi].value.data_mut()[ci] = original + T::cast(eps);
            let plus = loss_fn(model, &Tape::new())?.value().item().as_f64();
            model.params_mut()[pi].value.data_mut()[ci] = original - T::cast(eps);
            let minus = loss_fn(model, &Tape::new())?.value().item().as_f64();
            model.params_mut()[pi].value.data_mut()[ci] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = rel_err(grad[ci], numeric);
            report.checked_coords += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((name.clone(), ci));
            }
        }
    }
    Ok(report)
}

/// A lone tensor treated as a model, for checking individual primitives.
pub struct SingleInput<T>(pub Param<T>);

impl<T: Scalar> Parametrized<T> for SingleInput<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.0]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.0]
    }
}

/// Gradient-check one primitive: the input becomes the parameter of
/// `loss = mean(op(x) * probe)` for a fixed random probe, so every output
/// element influences the loss with a distinct weight.
pub fn grad_check_primitive<T: Scalar>(
    input: Tensor<T>,
    op: impl Fn(&Var<T>) -> Result<Var<T>>,
    eps: f64,
    coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut model = SingleInput(Param::new("input", input));
    // Shape probe from one untracked evaluation.
    let out_shape = {
        let tape = Tape::new();
        let x = tape.input(model.0.value.clone());
        op(&x)?.shape()
    };
    let mut rng = StreamRng::new(seed, "grad-check-probe");
    let numel: usize = out_shape.iter().product();
    let probe = Tensor::<T>::from_f64(out_shape, &rng.normal_vec(numel, 0.0, 1.0))?;
    grad_check(
        &mut model,
        |m, tape| {
            let x = tape.param(&m.0);
            let y = op(&x)?;
            Ok(y.mul(&tape.input(probe.clone()))?.mean())
        },
        eps,
        coords,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear {
        w: Param<f64>,
        b: Param<f64>,
    }

    impl Parametrized<f64> for Linear {
        fn params(&self) -> Vec<&Param<f64>> {
            vec![&self.w, &self.b]
        }
        fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
            vec![&mut self.w, &mut self.b]
        }
    }

    #[test]
    fn linear_layer_grad_check() {
        let mut rng = StreamRng::new(3, "lin");
        let mut model = Linear {
            w: Param::new("w", Tensor::from_f64([4, 3], &rng.normal_vec(12, 0.0, 1.0)).unwrap()),
            b: Param::new("b", Tensor::from_f64([1, 3], &rng.normal_vec(3, 0.0, 1.0)).unwrap()),
        };
        let x = Tensor::<f64>::from_f64([2, 4], &rng.normal_vec(8, 0.0, 1.0)).unwrap();
        let report = grad_check(
            &mut model,
            |m, tape| {
                let xin = tape.input(x.clone());
                let y = xin.matmul(&tape.param(&m.w))?.add(&tape.param(&m.b).broadcast(&[2, 3])?)?;
                Ok(y.sigmoid().square()?.mean())
            },
            1e-5,
            64,
            1,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-3, "err {}", report.max_rel_err);
    }

    #[test]
    fn relu_primitive_grad_check() {
        let mut rng = StreamRng::new(5, "relu");
        let x = Tensor::<f64>::from_f64([3, 7], &rng.normal_vec(21, 0.0, 1.0)).unwrap();
        let report = grad_check_primitive(x, |v| Ok(v.relu()), 1e-4, 64, 5).unwrap();
        assert!(report.max_rel_err < 1e-6, "err {}", report.max_rel_err);
    }
}
