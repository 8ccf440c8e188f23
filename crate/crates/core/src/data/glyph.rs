//! Procedural glyphs: a dataset-free stand-in for handwritten digits with
//! measurable morphology and controllable perturbations.
//!
//! Each of the ten classes is a fixed stroke template (polylines in unit
//! coordinates); samples jitter the control points, slant, scale and stroke
//! thickness, then render with a soft edge. Four morphological descriptors
//! are *measured* from the rendered image (not copied from the generator):
//! stroke thickness, ink width, ink height and slant.
//!
//! Perturbations mirror the classic morphology suite at desk scale:
//! identity, thin (erosion), thicken (dilation), swell (local radial
//! magnification) and a fracture analog (a thin gap carved through the
//! ink). Non-identity perturbations encode their relative position when
//! they have one.

use crate::rng::StreamRng;
use crate::tensor::Tensor;

pub const GLYPH_CLASSES: usize = 10;
/// Perturbation kinds, identity included.
pub const PERTURBATION_KINDS: usize = 5;
/// Width of the perturbation parameter vector.
pub const PERTURBATION_VEC_LEN: usize = 8;
/// Width of the confounder vector `[one-hot label | measurements]`.
pub const GLYPH_Z_LEN: usize = GLYPH_CLASSES + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerturbKind {
    Identity,
    Thin,
    Thicken,
    Swell,
    Fracture,
}

impl PerturbKind {
    pub fn index(self) -> usize {
        match self {
            Self::Identity => 0,
            Self::Thin => 1,
            Self::Thicken => 2,
            Self::Swell => 3,
            Self::Fracture => 4,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        [Self::Identity, Self::Thin, Self::Thicken, Self::Swell, Self::Fracture]
            .get(i)
            .copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Thin => "thin",
            Self::Thicken => "thicken",
            Self::Swell => "swell",
            Self::Fracture => "fracture",
        }
    }
}

/// A perturbation with its parameters. `center` is relative to the image
/// center in `[-0.5, 0.5]` units, when the operation has a location.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbation {
    pub kind: PerturbKind,
    pub center: (f64, f64),
    pub magnitude: f64,
}

impl Perturbation {
    pub fn identity() -> Self {
        Self {
            kind: PerturbKind::Identity,
            center: (0.0, 0.0),
            magnitude: 0.0,
        }
    }

    /// Fixed-width parameter vector: one-hot kind, relative position,
    /// magnitude.
    pub fn vector(&self) -> Vec<f32> {
        let mut v = vec![0.0f32; PERTURBATION_VEC_LEN];
        v[self.kind.index()] = 1.0;
        v[5] = self.center.0 as f32;
        v[6] = self.center.1 as f32;
        v[7] = self.magnitude as f32;
        v
    }
}

/// A rendered base glyph with its measured descriptors and perturbed
/// variants (entry 0 is always the identity).
#[derive(Clone, Debug)]
pub struct MorphoSample {
    pub id: usize,
    pub label: usize,
    /// `[s, s]` grayscale in `[0,1]`.
    pub base_image: Tensor<f32>,
    /// Measured: thickness, width, height (pixels), slant (shear coefficient).
    pub measurements: [f64; 4],
    pub perturbations: Vec<(Perturbation, Tensor<f32>)>,
}

impl MorphoSample {
    /// Confounder vector `[one-hot label | normalized measurements]`.
    pub fn z_vector(&self, size: usize) -> Vec<f32> {
        let mut z = vec![0.0f32; GLYPH_Z_LEN];
        z[self.label] = 1.0;
        let s = size as f64;
        z[GLYPH_CLASSES] = (self.measurements[0] / s) as f32;
        z[GLYPH_CLASSES + 1] = (self.measurements[1] / s) as f32;
        z[GLYPH_CLASSES + 2] = (self.measurements[2] / s) as f32;
        z[GLYPH_CLASSES + 3] = self.measurements[3] as f32;
        z
    }
}

#[derive(Clone, Debug)]
pub struct GlyphDataset {
    pub size: usize,
    pub samples: Vec<MorphoSample>,
}

/// Stroke templates per class, in unit coordinates (x right, y down).
fn class_template(label: usize) -> Vec<Vec<(f64, f64)>> {
    fn ring(cx: f64, cy: f64, rx: f64, ry: f64, n: usize) -> Vec<(f64, f64)> {
        (0..=n)
            .map(|i| {
                let a = i as f64 / n as f64 * std::f64::consts::TAU;
                (cx + rx * a.cos(), cy + ry * a.sin())
            })
            .collect()
    }
    fn arc(cx: f64, cy: f64, rx: f64, ry: f64, a0: f64, a1: f64, n: usize) -> Vec<(f64, f64)> {
        (0..=n)
            .map(|i| {
                let a = a0 + (a1 - a0) * i as f64 / n as f64;
                (cx + rx * a.cos(), cy + ry * a.sin())
            })
            .collect()
    }
    use std::f64::consts::PI;
    match label {
        0 => vec![ring(0.5, 0.5, 0.22, 0.3, 20)],
        1 => vec![vec![(0.42, 0.28), (0.52, 0.2), (0.52, 0.8)]],
        2 => vec![
            arc(0.5, 0.35, 0.18, 0.15, -PI, 0.0, 10),
            vec![(0.68, 0.35), (0.32, 0.8), (0.7, 0.8)],
        ],
        3 => vec![
            arc(0.48, 0.35, 0.17, 0.15, -PI * 0.9, PI * 0.5, 12),
            arc(0.48, 0.65, 0.19, 0.16, -PI * 0.5, PI * 0.9, 12),
        ],
        4 => vec![
            vec![(0.62, 0.2), (0.3, 0.62), (0.72, 0.62)],
            vec![(0.62, 0.2), (0.62, 0.8)],
        ],
        5 => vec![
            vec![(0.68, 0.2), (0.36, 0.2), (0.34, 0.5)],
            arc(0.5, 0.62, 0.18, 0.17, -PI * 0.6, PI * 0.8, 12),
        ],
        6 => vec![
            vec![(0.6, 0.18), (0.4, 0.45)],
            ring(0.5, 0.62, 0.17, 0.17, 16),
        ],
        7 => vec![vec![(0.3, 0.22), (0.7, 0.22), (0.44, 0.8)]],
        8 => vec![
            ring(0.5, 0.34, 0.15, 0.13, 16),
            ring(0.5, 0.66, 0.18, 0.15, 16),
        ],
        9 => vec![
            ring(0.5, 0.38, 0.17, 0.17, 16),
            vec![(0.66, 0.42), (0.6, 0.8)],
        ],
        _ => unreachable!("label < 10"),
    }
}

fn dist_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (px, py) = (p.0 - a.0, p.1 - a.1);
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        ((px * dx + py * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (ex, ey) = (px - t * dx, py - t * dy);
    (ex * ex + ey * ey).sqrt()
}

fn smoothstep(edge0: f64, edge1: f64, x: f64) -> f64 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Render one glyph; returns the image.
fn render_glyph(label: usize, size: usize, rng: &mut StreamRng) -> Tensor<f32> {
    let s = size as f64;
    let strokes = class_template(label);
    let jitter: Vec<Vec<(f64, f64)>> = {
        let slant = rng.uniform(-0.3, 0.3);
        let scale = rng.uniform(0.85, 1.1);
        let (ox, oy) = (rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04));
        strokes
            .iter()
            .map(|poly| {
                poly.iter()
                    .map(|&(x, y)| {
                        let (jx, jy) = (rng.uniform(-0.015, 0.015), rng.uniform(-0.015, 0.015));
                        let (cx, cy) = (x - 0.5 + jx, y - 0.5 + jy);
                        let sheared = cx - slant * cy;
                        (
                            (sheared * scale + 0.5 + ox) * s,
                            (cy * scale + 0.5 + oy) * s,
                        )
                    })
                    .collect()
            })
            .collect()
    };
    let thickness = rng.uniform(2.2, 3.4);
    let half = thickness / 2.0;

    let mut img = Tensor::<f32>::zeros([size, size]);
    let data = img.data_mut();
    for yi in 0..size {
        for xi in 0..size {
            let p = (xi as f64 + 0.5, yi as f64 + 0.5);
            let mut d = f64::INFINITY;
            for poly in &jitter {
                for seg in poly.windows(2) {
                    d = d.min(dist_to_segment(p, seg[0], seg[1]));
                }
            }
            let v = 1.0 - smoothstep(half - 0.6, half + 0.6, d);
            data[yi * size + xi] = v as f32;
        }
    }
    img
}

// -- measurement -----------------------------------------------------------

const INK_THRESHOLD: f32 = 0.5;

/// Chamfer (3-4) distance in pixels from each ink pixel to the background.
fn chamfer_distance(img: &Tensor<f32>) -> Vec<f64> {
    let size = img.shape()[0];
    let big = 1_000_000i64;
    let mut d: Vec<i64> = img
        .data()
        .iter()
        .map(|&v| if v > INK_THRESHOLD { big } else { 0 })
        .collect();
    let w = img.shape()[1];
    let at = |d: &Vec<i64>, x: isize, y: isize| -> i64 {
        if x < 0 || y < 0 || x >= w as isize || y >= size as isize {
            0 // outside counts as background
        } else {
            d[y as usize * w + x as usize]
        }
    };
    for y in 0..size as isize {
        for x in 0..w as isize {
            let idx = y as usize * w + x as usize;
            let mut best = d[idx];
            best = best.min(at(&d, x - 1, y) + 3);
            best = best.min(at(&d, x, y - 1) + 3);
            best = best.min(at(&d, x - 1, y - 1) + 4);
            best = best.min(at(&d, x + 1, y - 1) + 4);
            d[idx] = best;
        }
    }
    for y in (0..size as isize).rev() {
        for x in (0..w as isize).rev() {
            let idx = y as usize * w + x as usize;
            let mut best = d[idx];
            best = best.min(at(&d, x + 1, y) + 3);
            best = best.min(at(&d, x, y + 1) + 3);
            best = best.min(at(&d, x + 1, y + 1) + 4);
            best = best.min(at(&d, x - 1, y + 1) + 4);
            d[idx] = best;
        }
    }
    d.into_iter().map(|v| v as f64 / 3.0).collect()
}

/// Measure `[thickness, width, height, slant]` from a rendered glyph.
pub fn measure_glyph(img: &Tensor<f32>) -> [f64; 4] {
    let size = img.shape()[0];
    let w = img.shape()[1];
    let dist = chamfer_distance(img);
    let mut ink: Vec<(usize, usize)> = Vec::new();
    for y in 0..size {
        for x in 0..w {
            if img.data()[y * w + x] > INK_THRESHOLD {
                ink.push((x, y));
            }
        }
    }
    if ink.is_empty() {
        return [0.0, 0.0, 0.0, 0.0];
    }
    // For a ribbon of width t the interior distance averages t/4.
    let mean_dist: f64 = ink.iter().map(|&(x, y)| dist[y * w + x]).sum::<f64>() / ink.len() as f64;
    let thickness = 4.0 * mean_dist;

    let (mut min_x, mut max_x, mut min_y, mut max_y) = (usize::MAX, 0usize, usize::MAX, 0usize);
    for &(x, y) in &ink {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    let width = (max_x - min_x + 1) as f64;
    let height = (max_y - min_y + 1) as f64;

    // Slant: regression coefficient of x on y over the ink mass.
    let n = ink.len() as f64;
    let mean_x: f64 = ink.iter().map(|&(x, _)| x as f64).sum::<f64>() / n;
    let mean_y: f64 = ink.iter().map(|&(_, y)| y as f64).sum::<f64>() / n;
    let mut cov_xy = 0.0;
    let mut var_y = 0.0;
    for &(x, y) in &ink {
        let (dx, dy) = (x as f64 - mean_x, y as f64 - mean_y);
        cov_xy += dx * dy;
        var_y += dy * dy;
    }
    let slant = if var_y > 0.0 { -cov_xy / var_y } else { 0.0 };

    [thickness, width, height, slant]
}

// -- perturbations ----------------------------------------------------------

fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

fn morph_filter(img: &Tensor<f32>, radius: usize, dilate: bool) -> Tensor<f32> {
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let offsets = disk_offsets(radius);
    let src = img.data();
    let mut out = Tensor::<f32>::zeros([h, w]);
    let dst = out.data_mut();
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut v: f32 = if dilate { 0.0 } else { 1.0 };
            for &(dx, dy) in &offsets {
                let (xx, yy) = (x + dx, y + dy);
                let s = if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
                    0.0
                } else {
                    src[yy as usize * w + xx as usize]
                };
                v = if dilate { v.max(s) } else { v.min(s) };
            }
            dst[y as usize * w + x as usize] = v;
        }
    }
    out
}

fn bilinear(img: &Tensor<f32>, x: f64, y: f64) -> f32 {
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let x0 = x.floor().clamp(0.0, (w - 1) as f64) as usize;
    let y0 = y.floor().clamp(0.0, (h - 1) as f64) as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = (x - x0 as f64).clamp(0.0, 1.0) as f32;
    let fy = (y - y0 as f64).clamp(0.0, 1.0) as f32;
    let d = img.data();
    let v00 = d[y0 * w + x0];
    let v01 = d[y0 * w + x1];
    let v10 = d[y1 * w + x0];
    let v11 = d[y1 * w + x1];
    let v = v00 * (1.0 - fx) * (1.0 - fy) + v01 * fx * (1.0 - fy) + v10 * (1.0 - fx) * fy + v11 * fx * fy;
    v.clamp(0.0, 1.0)
}

/// Apply a perturbation to a rendered glyph.
pub fn apply_perturbation(img: &Tensor<f32>, p: &Perturbation) -> Tensor<f32> {
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let size = h as f64;
    match p.kind {
        PerturbKind::Identity => img.clone(),
        PerturbKind::Thin => morph_filter(img, (p.magnitude.round() as usize).max(1), false),
        PerturbKind::Thicken => morph_filter(img, (p.magnitude.round() as usize).max(1), true),
        PerturbKind::Swell => {
            let cx = (p.center.0 + 0.5) * size;
            let cy = (p.center.1 + 0.5) * size;
            let radius = 0.28 * size;
            let gamma = p.magnitude; // < 1 magnifies around the center
            let mut out = Tensor::<f32>::zeros([h, w]);
            let dst = out.data_mut();
            for y in 0..h {
                for x in 0..w {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let (dx, dy) = (px - cx, py - cy);
                    let r = (dx * dx + dy * dy).sqrt();
                    let v = if r < radius && r > 0.0 {
                        // source pulled toward the center: local magnification
                        let factor = (r / radius).powf(gamma);
                        let sx = cx + dx * factor;
                        let sy = cy + dy * factor;
                        bilinear(img, sx - 0.5, sy - 0.5)
                    } else {
                        img.data()[y * w + x]
                    };
                    dst[y * w + x] = v;
                }
            }
            out
        }
        PerturbKind::Fracture => {
            let cx = (p.center.0 + 0.5) * size;
            let cy = (p.center.1 + 0.5) * size;
            let angle = p.magnitude * std::f64::consts::PI;
            let (dx, dy) = (angle.cos(), angle.sin());
            let half_len = 0.14 * size;
            let a = (cx - dx * half_len, cy - dy * half_len);
            let b = (cx + dx * half_len, cy + dy * half_len);
            let gap = 0.8f64;
            let mut out = img.clone();
            let dst = out.data_mut();
            for y in 0..h {
                for x in 0..w {
                    let d = dist_to_segment((x as f64 + 0.5, y as f64 + 0.5), a, b);
                    let cut = 1.0 - smoothstep(gap - 0.5, gap + 0.5, d);
                    dst[y * w + x] *= 1.0 - cut as f32;
                }
            }
            out
        }
    }
}

/// Draw a random perturbation; location (when applicable) is sampled from
/// the glyph's ink so the operation actually lands on a stroke.
fn random_perturbation(img: &Tensor<f32>, rng: &mut StreamRng) -> Perturbation {
    let kind = PerturbKind::from_index(1 + rng.below(PERTURBATION_KINDS - 1)).unwrap();
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let size = h as f64;
    let ink: Vec<(usize, usize)> = (0..h * w)
        .filter(|&i| img.data()[i] > INK_THRESHOLD)
        .map(|i| (i % w, i / w))
        .collect();
    let center = if ink.is_empty() {
        (0.0, 0.0)
    } else {
        let (x, y) = ink[rng.below(ink.len())];
        (
            (x as f64 + 0.5) / size - 0.5,
            (y as f64 + 0.5) / size - 0.5,
        )
    };
    match kind {
        PerturbKind::Identity => Perturbation::identity(),
        // Continuous magnitudes keep perturbation vectors almost surely
        // distinct; the applied radius rounds.
        PerturbKind::Thin => Perturbation {
            kind,
            center: (0.0, 0.0),
            magnitude: rng.uniform(0.8, 1.45),
        },
        PerturbKind::Thicken => Perturbation {
            kind,
            center: (0.0, 0.0),
            magnitude: rng.uniform(0.8, 2.2),
        },
        PerturbKind::Swell => Perturbation {
            kind,
            center,
            magnitude: rng.uniform(0.45, 0.7),
        },
        PerturbKind::Fracture => Perturbation {
            kind,
            center,
            magnitude: rng.uniform(-1.0, 1.0),
        },
    }
}

/// Generate `count` base glyphs, each with `perturbations_per_image`
/// variants (the identity is always entry 0). Deterministic per seed.
pub fn gen_morpho_dataset(
    count: usize,
    perturbations_per_image: usize,
    size: usize,
    seed: u64,
) -> GlyphDataset {
    let root = StreamRng::new(seed, "glyph-data");
    let samples = (0..count)
        .map(|id| {
            let mut rng = root.derive(id as u64);
            let label = id % GLYPH_CLASSES;
            let base_image = render_glyph(label, size, &mut rng);
            let measurements = measure_glyph(&base_image);
            let mut perturbations = Vec::with_capacity(perturbations_per_image.max(1));
            perturbations.push((Perturbation::identity(), base_image.clone()));
            for _ in 1..perturbations_per_image.max(1) {
                let p = random_perturbation(&base_image, &mut rng);
                let img = apply_perturbation(&base_image, &p);
                perturbations.push((p, img));
            }
            MorphoSample {
                id,
                label,
                base_image,
                measurements,
                perturbations,
            }
        })
        .collect();
    GlyphDataset { size, samples }
}
