//! Treatment samplers and quintuplet assembly.

use crate::rng::StreamRng;
use crate::tensor::Tensor;

use super::echo::{EchoSample, Split};
use super::glyph::GlyphDataset;
use super::DataError;

/// Counterfactual EF: uniform over `[0, psi-0.1) U [psi+0.1, 1)`, weighted
/// by segment length, so `|X* - psi| >= 0.1` always. If one segment is
/// empty the other is used alone.
pub fn sample_cf_treatment(psi: f64, rng: &mut StreamRng) -> f64 {
    let lower = (psi - 0.1).max(0.0);
    let upper = (1.0 - (psi + 0.1)).max(0.0);
    debug_assert!(lower + upper > 0.0, "psi leaves no room for a counterfactual");
    let u = rng.uniform(0.0, lower + upper);
    if u < lower {
        u
    } else {
        (psi + 0.1) + (u - lower)
    }
}

/// Confounder of a quintuplet.
#[derive(Clone, Debug)]
pub enum Confounder {
    /// Glyph description `[one-hot label | measurements]`.
    Features(Vec<f32>),
    /// Echo video `[f, s, s]` (shares its buffer with `y`).
    Video(Tensor<f32>),
}

/// Treatment of a quintuplet.
#[derive(Clone, Debug)]
pub enum Treatment {
    Ef(f64),
    Perturbation(Vec<f32>),
}

impl Treatment {
    pub fn as_ef(&self) -> f64 {
        match self {
            Self::Ef(v) => *v,
            Self::Perturbation(_) => panic!("perturbation treatment used as EF"),
        }
    }

    pub fn as_vec(&self) -> &[f32] {
        match self {
            Self::Perturbation(v) => v,
            Self::Ef(_) => panic!("EF treatment used as vector"),
        }
    }
}

/// The training quintuplet: confounder, factual/counterfactual treatments,
/// factual outcome and (supervised data only) the counterfactual outcome.
#[derive(Clone, Debug)]
pub struct Quintuplet {
    pub id: String,
    pub z: Confounder,
    pub x: Treatment,
    pub x_star: Treatment,
    /// Factual outcome: perturbed glyph image `[s,s]`, or the video itself.
    pub y: Tensor<f32>,
    pub y_star: Option<Tensor<f32>>,
}

/// Fully supervised glyph quintuplets: two distinct perturbations `m != n`
/// of the same base, outcomes are the perturbed images.
pub fn make_glyph_quintuplets(
    dataset: &GlyphDataset,
    count: usize,
    rng: &mut StreamRng,
) -> Result<Vec<Quintuplet>, DataError> {
    if dataset.samples.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let sample = &dataset.samples[rng.below(dataset.samples.len())];
        let n_pert = sample.perturbations.len();
        debug_assert!(n_pert >= 2, "need at least two perturbations per base");
        let m = rng.below(n_pert);
        let n = {
            let shift = 1 + rng.below(n_pert - 1);
            (m + shift) % n_pert
        };
        let (pm, im) = &sample.perturbations[m];
        let (pn, inn) = &sample.perturbations[n];
        out.push(Quintuplet {
            id: format!("q{k:06}_g{}", sample.id),
            z: Confounder::Features(sample.z_vector(dataset.size)),
            x: Treatment::Perturbation(pm.vector()),
            x_star: Treatment::Perturbation(pn.vector()),
            y: im.clone(),
            y_star: Some(inn.clone()),
        });
    }
    Ok(out)
}

/// Semi-supervised echo quintuplets over one split: `Z = Y = V`, `X` the
/// labelled EF, `X*` a counterfactual draw, no `Y*`.
pub fn make_echo_quintuplets(
    samples: &[&EchoSample],
    rng: &mut StreamRng,
) -> Result<Vec<Quintuplet>, DataError> {
    if samples.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    Ok(samples
        .iter()
        .map(|s| {
            let x_star = sample_cf_treatment(s.ef, rng);
            Quintuplet {
                id: s.id.clone(),
                z: Confounder::Video(s.video.clone()),
                x: Treatment::Ef(s.ef),
                x_star: Treatment::Ef(x_star),
                y: s.video.clone(),
                y_star: None,
            }
        })
        .collect())
}

/// Convenience: echo quintuplets for a dataset split.
pub fn echo_quintuplets_for_split(
    dataset: &super::echo::EchoDataset,
    split: Split,
    rng: &mut StreamRng,
) -> Result<Vec<Quintuplet>, DataError> {
    let samples = dataset.split(split);
    make_echo_quintuplets(&samples, rng)
}
