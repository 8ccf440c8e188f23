//! Synthetic echo clips: a dark pulsating chamber (ellipse) in speckled
//! tissue.
//!
//! The chamber area follows a raised cosine between the end-diastolic area
//! `A_ED` (frame 0, the maximum) and the end-systolic area
//! `A_ES = A_ED * (1 - ef)`, over one or two cardiac cycles per clip, so
//! the stored ejection fraction is exact by construction:
//! `ef = (A_ED - A_ES) / A_ED`. The anatomy seed controls everything except
//! `ef` — center, eccentricity, orientation, base areas and the speckle
//! texture — so two clips with the same seed and different `ef` are
//! pixel-identical at the frame of maximal area.

use thiserror::Error;

use crate::rng::StreamRng;
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum EchoError {
    #[error("requested ef {0} outside the open interval (0.05, 0.95)")]
    InvalidEf(f64),
    #[error("frames must be at least 8, got {0}")]
    TooFewFrames(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Self::Train),
            "val" | "validation" => Some(Self::Val),
            "test" => Some(Self::Test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EchoSample {
    pub id: String,
    /// `[frames, s, s]` grayscale in `[0,1]`.
    pub video: Tensor<f32>,
    pub ef: f64,
    pub anatomy_seed: u64,
    pub heart_rate: u32,
    pub split: Split,
}

#[derive(Clone, Debug)]
pub struct EchoDataset {
    pub frames: usize,
    pub size: usize,
    pub samples: Vec<EchoSample>,
}

impl EchoDataset {
    pub fn split(&self, split: Split) -> Vec<&EchoSample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }
}

/// Anatomy drawn from the seed alone (independent of `ef`).
struct Anatomy {
    cx: f64,
    cy: f64,
    semi_a: f64,
    semi_b: f64,
    orientation: f64,
    tissue_base: f64,
}

fn draw_anatomy(size: usize, rng: &mut StreamRng) -> Anatomy {
    let s = size as f64;
    Anatomy {
        cx: s * (0.5 + rng.uniform(-0.06, 0.06)),
        cy: s * (0.5 + rng.uniform(-0.06, 0.06)),
        semi_a: s * rng.uniform(0.22, 0.30),
        semi_b: s * rng.uniform(0.15, 0.22),
        orientation: rng.uniform(-0.4, 0.4),
        tissue_base: rng.uniform(0.5, 0.62),
    }
}

const CHAMBER_BASE: f64 = 0.07;
/// Speckle blend: value = base * (1 - s + s * rayleigh).
const SPECKLE_STRENGTH: f64 = 0.3;

/// Area fraction curve: raised cosine with the maximum at frame 0.
fn area_fraction(t: usize, frames: usize, heart_rate: u32) -> f64 {
    let phase = std::f64::consts::TAU * heart_rate as f64 * t as f64 / frames as f64;
    (1.0 + phase.cos()) / 2.0
}

/// Render one clip. The analytic area sequence has its maximum at frame 0
/// and minimum `A_ED * (1 - ef)` exactly on a sampled frame.
pub fn render_echo_clip(
    ef: f64,
    anatomy_seed: u64,
    heart_rate: u32,
    frames: usize,
    size: usize,
) -> Result<Tensor<f32>, EchoError> {
    if !(0.05..0.95).contains(&ef) || ef <= 0.05 {
        return Err(EchoError::InvalidEf(ef));
    }
    if frames < 8 {
        return Err(EchoError::TooFewFrames(frames));
    }
    let mut anatomy_rng = StreamRng::new(anatomy_seed, "echo-anatomy");
    let anatomy = draw_anatomy(size, &mut anatomy_rng);
    let speckle_root = StreamRng::new(anatomy_seed, "echo-speckle");

    let s = size as f64;
    let mut video = Tensor::<f32>::zeros([frames, size, size]);
    let data = video.data_mut();
    let (sin_o, cos_o) = anatomy.orientation.sin_cos();

    for t in 0..frames {
        let w = area_fraction(t, frames, heart_rate);
        // A(t) = A_ED * (1 - ef * (1 - w)); axes scale with sqrt(A/A_ED).
        let scale = (1.0 - ef * (1.0 - w)).sqrt();
        let (a, b) = (anatomy.semi_a * scale, anatomy.semi_b * scale);
        let mut speckle = speckle_root.derive(t as u64);
        for yi in 0..size {
            for xi in 0..size {
                let x = xi as f64 + 0.5 - anatomy.cx;
                let y = yi as f64 + 0.5 - anatomy.cy;
                let u = (x * cos_o + y * sin_o) / a;
                let v = (-x * sin_o + y * cos_o) / b;
                let e = u * u + v * v;
                // soft chamber boundary over e in [1-d, 1+d]
                let d = 0.18;
                let chamber_frac = if e <= 1.0 - d {
                    1.0
                } else if e >= 1.0 + d {
                    0.0
                } else {
                    let t01 = (e - (1.0 - d)) / (2.0 * d);
                    1.0 - t01 * t01 * (3.0 - 2.0 * t01)
                };
                let tissue = anatomy.tissue_base + 0.1 * (yi as f64 / s - 0.5);
                let base = CHAMBER_BASE * chamber_frac + tissue * (1.0 - chamber_frac);
                let r = speckle.rayleigh_mean1();
                let value = base * (1.0 - SPECKLE_STRENGTH + SPECKLE_STRENGTH * r);
                data[(t * size + yi) * size + xi] = value.clamp(0.0, 1.0) as f32;
            }
        }
    }
    Ok(video)
}

/// Generate a dataset of random clips; splits are assigned 80/10/10 in
/// deterministic order. Per-sample EFs are uniform in `[0.15, 0.85]`.
pub fn gen_echo_dataset(
    count: usize,
    frames: usize,
    size: usize,
    seed: u64,
) -> Result<EchoDataset, EchoError> {
    let mut rng = StreamRng::new(seed, "echo-data");
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let ef = rng.uniform(0.15, 0.85);
        let anatomy_seed = rng.u64();
        let heart_rate = 1 + rng.below(2) as u32;
        let video = render_echo_clip(ef, anatomy_seed, heart_rate, frames, size)?;
        let split = match i % 10 {
            8 => Split::Val,
            9 => Split::Test,
            _ => Split::Train,
        };
        samples.push(EchoSample {
            id: format!("clip{i:05}"),
            video,
            ef,
            anatomy_seed,
            heart_rate,
            split,
        });
    }
    Ok(EchoDataset {
        frames,
        size,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_ef_is_rejected() {
        assert!(matches!(
            render_echo_clip(0.0, 1, 1, 8, 32),
            Err(EchoError::InvalidEf(_))
        ));
        assert!(matches!(
            render_echo_clip(0.97, 1, 1, 8, 32),
            Err(EchoError::InvalidEf(_))
        ));
        assert!(matches!(
            render_echo_clip(0.5, 1, 1, 4, 32),
            Err(EchoError::TooFewFrames(4))
        ));
    }

    #[test]
    fn analytic_area_curve_matches_stored_ef() {
        let frames = 8;
        for hr in [1u32, 2] {
            let fracs: Vec<f64> = (0..frames).map(|t| area_fraction(t, frames, hr)).collect();
            let max = fracs.iter().cloned().fold(f64::MIN, f64::max);
            let min = fracs.iter().cloned().fold(f64::MAX, f64::min);
            assert!((max - 1.0).abs() < 1e-12);
            assert!(min.abs() < 1e-12);
            // with w spanning [0,1] exactly, (A_max - A_min)/A_max == ef exactly
        }
    }

    #[test]
    fn same_anatomy_different_ef_identical_at_max_area_frame() {
        let a = render_echo_clip(0.3, 77, 1, 8, 32).unwrap();
        let b = render_echo_clip(0.7, 77, 1, 8, 32).unwrap();
        let frame_px = 32 * 32;
        assert_eq!(a.data()[..frame_px], b.data()[..frame_px]);
        // other frames must differ
        assert_ne!(a.data()[4 * frame_px..5 * frame_px], b.data()[4 * frame_px..5 * frame_px]);
    }

    #[test]
    fn dataset_generation_is_deterministic() {
        let a = gen_echo_dataset(6, 8, 32, 5).unwrap();
        let b = gen_echo_dataset(6, 8, 32, 5).unwrap();
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            assert_eq!(sa.ef, sb.ef);
            assert_eq!(sa.video.data(), sb.video.data());
        }
        let splits: Vec<Split> = a.samples.iter().map(|s| s.split).collect();
        assert!(splits.contains(&Split::Train));
    }

    #[test]
    fn pixels_in_unit_range_and_chamber_is_dark() {
        let clip = render_echo_clip(0.5, 9, 1, 8, 32).unwrap();
        assert!(clip.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        // center pixel at frame 0 should be close to the chamber base
        let center = clip.data()[16 * 32 + 16];
        assert!(center < 0.2, "chamber center {center}");
    }
}
