//! The shared-weight twin generator branch.
//!
//! One parameter set serves both the factual and the counterfactual call:
//! `twin_generate` is literally two `generate` invocations on the same tape,
//! so the mounted parameters are the same nodes and gradients from either
//! output land in the same buffers.
//!
//! Two concrete branches exist. [`VideoGenerator`] maps a confounder video
//! and a scalar treatment to a video of the same shape (encoder, treatment
//! channel concatenated at the bottleneck, multiplicative noise at the
//! bottleneck, decoder). [`EmbeddingGenerator`] maps a glyph description
//! vector and a treatment vector to a quantized-autoencoder embedding grid.

use crate::rng::StreamRng;
use crate::scalar::Scalar;
use crate::tensor::{Param, Parametrized, Result, Tape, Tensor, Var};

use super::layers::{per_frame, upsample_video, Conv2d, ConvT2d, Linear, TemporalConv};

const LEAK: f64 = 0.2;

/// A generator branch usable in a twin configuration.
pub trait TwinBranch<T: Scalar>: Parametrized<T> {
    /// Deterministic forward pass given confounder `z`, treatment `x`
    /// (one row per batch item) and noise `u_y`.
    fn generate(&self, tape: &Tape<T>, z: &Tensor<T>, x: &Tensor<T>, u_y: &Tensor<T>) -> Result<Var<T>>;

    /// Shape of the `U_Y` tensor expected at the noise site for a batch.
    fn noise_shape(&self, batch: usize) -> Vec<usize>;
}

/// Factual and counterfactual outputs from one parameter set: identical
/// weights, identical `z` and `u_y`, differing only in the treatment.
pub fn twin_generate<T: Scalar, B: TwinBranch<T> + ?Sized>(
    branch: &B,
    tape: &Tape<T>,
    z: &Tensor<T>,
    x: &Tensor<T>,
    x_star: &Tensor<T>,
    u_y: &Tensor<T>,
) -> Result<(Var<T>, Var<T>)> {
    let factual = branch.generate(tape, z, x, u_y)?;
    let counterfactual = branch.generate(tape, z, x_star, u_y)?;
    Ok((factual, counterfactual))
}

#[derive(Clone, Copy, Debug)]
pub struct VideoGeneratorConfig {
    pub frames: usize,
    pub size: usize,
    /// Channel width of the first encoder stage; the bottleneck is twice this.
    pub channels: usize,
}

impl Default for VideoGeneratorConfig {
    fn default() -> Self {
        Self {
            frames: 8,
            size: 32,
            channels: 16,
        }
    }
}

/// Video-to-video branch: `[n,1,f,s,s] -> [n,1,f,s,s]`, treatment scalar per
/// item, noise multiplied into the bottleneck feature map.
pub struct VideoGenerator<T> {
    pub cfg: VideoGeneratorConfig,
    enc_s1: Conv2d<T>,
    enc_t1: TemporalConv<T>,
    enc_s2: Conv2d<T>,
    enc_t2: TemporalConv<T>,
    bottleneck: Conv2d<T>,
    dec_s1: Conv2d<T>,
    dec_t1: TemporalConv<T>,
    dec_s2: Conv2d<T>,
    out: Conv2d<T>,
}

impl<T: Scalar> VideoGenerator<T> {
    pub fn new(name: &str, cfg: VideoGeneratorConfig, rng: &mut StreamRng) -> Self {
        assert!(cfg.size % 4 == 0, "size must be divisible by 4");
        let c = cfg.channels;
        Self {
            cfg,
            enc_s1: Conv2d::new(&format!("{name}.enc_s1"), 1, c, 3, 2, 1, rng),
            enc_t1: TemporalConv::new(&format!("{name}.enc_t1"), c, c, 3, rng),
            enc_s2: Conv2d::new(&format!("{name}.enc_s2"), c, 2 * c, 3, 2, 1, rng),
            enc_t2: TemporalConv::new(&format!("{name}.enc_t2"), 2 * c, 2 * c, 3, rng),
            bottleneck: Conv2d::new(&format!("{name}.bottleneck"), 2 * c + 1, 2 * c, 3, 1, 1, rng),
            dec_s1: Conv2d::new(&format!("{name}.dec_s1"), 2 * c, c, 3, 1, 1, rng),
            dec_t1: TemporalConv::new(&format!("{name}.dec_t1"), c, c, 3, rng),
            dec_s2: Conv2d::new(&format!("{name}.dec_s2"), c, c, 3, 1, 1, rng),
            out: Conv2d::new(&format!("{name}.out"), c, 1, 3, 1, 1, rng),
        }
    }

    /// Bottleneck spatial extent.
    fn bottleneck_hw(&self) -> usize {
        self.cfg.size / 4
    }

    /// Constant treatment channel `[n,1,f,h,w]` from per-item scalars.
    fn treatment_plane(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = x.numel();
        let (f, hw) = (self.cfg.frames, self.bottleneck_hw());
        let mut plane = Tensor::zeros([n, 1, f, hw, hw]);
        let per_item = f * hw * hw;
        let dst = plane.data_mut();
        for (i, &v) in x.data().iter().enumerate() {
            dst[i * per_item..(i + 1) * per_item].fill(v);
        }
        Ok(plane)
    }
}

impl<T: Scalar> TwinBranch<T> for VideoGenerator<T> {
    fn generate(&self, tape: &Tape<T>, z: &Tensor<T>, x: &Tensor<T>, u_y: &Tensor<T>) -> Result<Var<T>> {
        let zv = tape.input(z.clone());
        let h = per_frame(&zv, |f| self.enc_s1.forward(f))?.leaky_relu(LEAK);
        let h = self.enc_t1.forward(&h)?.leaky_relu(LEAK);
        let h = per_frame(&h, |f| self.enc_s2.forward(f))?.leaky_relu(LEAK);
        let h = self.enc_t2.forward(&h)?.leaky_relu(LEAK);

        // Treatment enters as a constant channel at the bottleneck.
        let treatment = tape.input(self.treatment_plane(x)?);
        let h = Var::concat(&[&h, &treatment], 1)?;
        let h = per_frame(&h, |f| self.bottleneck.forward(f))?.leaky_relu(LEAK);

        // Outcome noise multiplies the deepest feature map, broadcast over frames.
        let noise = tape.input(u_y.clone()).broadcast(&h.shape())?;
        let h = h.mul(&noise)?;

        let h = upsample_video(&h, 2)?;
        let h = per_frame(&h, |f| self.dec_s1.forward(f))?.leaky_relu(LEAK);
        let h = self.dec_t1.forward(&h)?.leaky_relu(LEAK);
        let h = upsample_video(&h, 2)?;
        let h = per_frame(&h, |f| self.dec_s2.forward(f))?.leaky_relu(LEAK);
        let y = per_frame(&h, |f| self.out.forward(f))?;
        Ok(y.sigmoid())
    }

    fn noise_shape(&self, batch: usize) -> Vec<usize> {
        let hw = self.bottleneck_hw();
        // Per-channel spatial field, constant across frames.
        vec![batch, 2 * self.cfg.channels, 1, hw, hw]
    }
}

impl<T: Scalar> Parametrized<T> for VideoGenerator<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut ps = Vec::new();
        ps.extend(self.enc_s1.params());
        ps.extend(self.enc_t1.params());
        ps.extend(self.enc_s2.params());
        ps.extend(self.enc_t2.params());
        ps.extend(self.bottleneck.params());
        ps.extend(self.dec_s1.params());
        ps.extend(self.dec_t1.params());
        ps.extend(self.dec_s2.params());
        ps.extend(self.out.params());
        ps
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut ps = Vec::new();
        ps.extend(self.enc_s1.params_mut());
        ps.extend(self.enc_t1.params_mut());
        ps.extend(self.enc_s2.params_mut());
        ps.extend(self.enc_t2.params_mut());
        ps.extend(self.bottleneck.params_mut());
        ps.extend(self.dec_s1.params_mut());
        ps.extend(self.dec_t1.params_mut());
        ps.extend(self.dec_s2.params_mut());
        ps.extend(self.out.params_mut());
        ps
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EmbeddingGeneratorConfig {
    /// Confounder vector width (one-hot label + measurements).
    pub z_dim: usize,
    /// Treatment (perturbation) vector width.
    pub x_dim: usize,
    /// Embedding channels of the target grid.
    pub q: usize,
    /// Embedding grid extent (h = w).
    pub grid: usize,
    pub hidden: usize,
}

impl Default for EmbeddingGeneratorConfig {
    fn default() -> Self {
        Self {
            z_dim: 14,
            x_dim: 8,
            q: 8,
            grid: 8,
            hidden: 128,
        }
    }
}

/// Vector-to-embedding branch: `[n, z_dim] -> [n, q, grid, grid]`.
pub struct EmbeddingGenerator<T> {
    pub cfg: EmbeddingGeneratorConfig,
    bottleneck_ch: usize,
    bottleneck_hw: usize,
    fc1: Linear<T>,
    fc2: Linear<T>,
    inject: Conv2d<T>,
    up1: ConvT2d<T>,
    up2: ConvT2d<T>,
}

impl<T: Scalar> EmbeddingGenerator<T> {
    pub fn new(name: &str, cfg: EmbeddingGeneratorConfig, rng: &mut StreamRng) -> Self {
        assert!(cfg.grid % 4 == 0, "grid must be divisible by 4");
        let bottleneck_ch = 32;
        let bottleneck_hw = cfg.grid / 4;
        Self {
            cfg,
            bottleneck_ch,
            bottleneck_hw,
            fc1: Linear::new(&format!("{name}.fc1"), cfg.z_dim, cfg.hidden, rng),
            fc2: Linear::new(
                &format!("{name}.fc2"),
                cfg.hidden,
                bottleneck_ch * bottleneck_hw * bottleneck_hw,
                rng,
            ),
            inject: Conv2d::new(
                &format!("{name}.inject"),
                bottleneck_ch + cfg.x_dim,
                bottleneck_ch,
                3,
                1,
                1,
                rng,
            ),
            up1: ConvT2d::new(&format!("{name}.up1"), bottleneck_ch, 16, 4, 2, 1, rng),
            up2: ConvT2d::new(&format!("{name}.up2"), 16, cfg.q, 4, 2, 1, rng),
        }
    }

    /// Treatment vector broadcast to constant channels `[n, x_dim, h, h]`.
    fn treatment_planes(&self, x: &Tensor<T>) -> Tensor<T> {
        let (n, d) = (x.shape()[0], x.shape()[1]);
        let hw = self.bottleneck_hw;
        let mut planes = Tensor::zeros([n, d, hw, hw]);
        let dst = planes.data_mut();
        for i in 0..n {
            for j in 0..d {
                let v = x.data()[i * d + j];
                let base = (i * d + j) * hw * hw;
                dst[base..base + hw * hw].fill(v);
            }
        }
        planes
    }
}

impl<T: Scalar> TwinBranch<T> for EmbeddingGenerator<T> {
    fn generate(&self, tape: &Tape<T>, z: &Tensor<T>, x: &Tensor<T>, u_y: &Tensor<T>) -> Result<Var<T>> {
        let n = z.shape()[0];
        let zv = tape.input(z.clone());
        let h = self.fc1.forward(&zv)?.leaky_relu(LEAK);
        let h = self.fc2.forward(&h)?.leaky_relu(LEAK);
        let h = h.reshape([n, self.bottleneck_ch, self.bottleneck_hw, self.bottleneck_hw])?;

        let treatment = tape.input(self.treatment_planes(x));
        let h = Var::concat(&[&h, &treatment], 1)?;
        let h = self.inject.forward(&h)?.leaky_relu(LEAK);

        let noise = tape.input(u_y.clone()).broadcast(&h.shape())?;
        let h = h.mul(&noise)?;

        let h = self.up1.forward(&h)?.leaky_relu(LEAK);
        self.up2.forward(&h)
    }

    fn noise_shape(&self, batch: usize) -> Vec<usize> {
        vec![batch, self.bottleneck_ch, self.bottleneck_hw, self.bottleneck_hw]
    }
}

impl<T: Scalar> Parametrized<T> for EmbeddingGenerator<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut ps = Vec::new();
        ps.extend(self.fc1.params());
        ps.extend(self.fc2.params());
        ps.extend(self.inject.params());
        ps.extend(self.up1.params());
        ps.extend(self.up2.params());
        ps
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut ps = Vec::new();
        ps.extend(self.fc1.params_mut());
        ps.extend(self.fc2.params_mut());
        ps.extend(self.inject.params_mut());
        ps.extend(self.up1.params_mut());
        ps.extend(self.up2.params_mut());
        ps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::noise::sample_noise;

    fn tiny_video_gen() -> (VideoGenerator<f32>, StreamRng) {
        let mut rng = StreamRng::new(11, "gen-test");
        let gen = VideoGenerator::new(
            "g",
            VideoGeneratorConfig {
                frames: 2,
                size: 8,
                channels: 4,
            },
            &mut rng,
        );
        (gen, rng)
    }

    #[test]
    fn output_shape_equals_confounder_shape() {
        let (gen, mut rng) = tiny_video_gen();
        let z = Tensor::from_f64([1, 1, 2, 8, 8], &rng.uniform_vec(128, 0.0, 1.0)).unwrap();
        let x = Tensor::from_f64([1], &[0.4]).unwrap();
        let u = sample_noise::<f32>(&mut rng, &gen.noise_shape(1), 0.25);
        let tape = Tape::new();
        let y = gen.generate(&tape, &z, &x, &u).unwrap();
        assert_eq!(y.shape(), z.shape());
        assert!(y.value().data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn generate_is_deterministic_and_noise_sensitive() {
        let (gen, mut rng) = tiny_video_gen();
        let z = Tensor::from_f64([1, 1, 2, 8, 8], &rng.uniform_vec(128, 0.0, 1.0)).unwrap();
        let x = Tensor::from_f64([1], &[0.7]).unwrap();
        let u1 = sample_noise::<f32>(&mut rng, &gen.noise_shape(1), 0.25);
        let u2 = sample_noise::<f32>(&mut rng, &gen.noise_shape(1), 0.25);

        let a = gen.generate(&Tape::new(), &z, &x, &u1).unwrap().value();
        let b = gen.generate(&Tape::new(), &z, &x, &u1).unwrap().value();
        assert_eq!(a.data(), b.data());

        let c = gen.generate(&Tape::new(), &z, &x, &u2).unwrap().value();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn twin_with_equal_treatments_is_bit_identical() {
        let (gen, mut rng) = tiny_video_gen();
        let z = Tensor::from_f64([2, 1, 2, 8, 8], &rng.uniform_vec(256, 0.0, 1.0)).unwrap();
        let x = Tensor::from_f64([2], &[0.3, 0.6]).unwrap();
        let u = sample_noise::<f32>(&mut rng, &gen.noise_shape(2), 0.25);
        let tape = Tape::new();
        let (y, y_star) = twin_generate(&gen, &tape, &z, &x, &x, &u).unwrap();
        let (a, b) = (y.value(), y_star.value());
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn swapping_treatments_swaps_outputs() {
        let (gen, mut rng) = tiny_video_gen();
        let z = Tensor::from_f64([1, 1, 2, 8, 8], &rng.uniform_vec(128, 0.0, 1.0)).unwrap();
        let x1 = Tensor::from_f64([1], &[0.2]).unwrap();
        let x2 = Tensor::from_f64([1], &[0.8]).unwrap();
        let u = sample_noise::<f32>(&mut rng, &gen.noise_shape(1), 0.25);
        let (y_a, ys_a) = twin_generate(&gen, &Tape::new(), &z, &x1, &x2, &u).unwrap();
        let (y_b, ys_b) = twin_generate(&gen, &Tape::new(), &z, &x2, &x1, &u).unwrap();
        assert_eq!(y_a.value().data(), ys_b.value().data());
        assert_eq!(ys_a.value().data(), y_b.value().data());
    }

    #[test]
    fn counterfactual_loss_updates_the_same_parameters() {
        let (gen, mut rng) = tiny_video_gen();
        let z = Tensor::from_f64([1, 1, 2, 8, 8], &rng.uniform_vec(128, 0.0, 1.0)).unwrap();
        let x = Tensor::from_f64([1], &[0.2]).unwrap();
        let xs = Tensor::from_f64([1], &[0.9]).unwrap();
        let u = sample_noise::<f32>(&mut rng, &gen.noise_shape(1), 0.25);
        let tape = Tape::new();
        let (_, y_star) = twin_generate(&gen, &tape, &z, &x, &xs, &u).unwrap();
        let loss = y_star.mean();
        let grads = tape.backward(&loss).unwrap();
        // every generator parameter receives a gradient from the
        // counterfactual path alone
        for p in gen.params() {
            let g = grads.for_param(p);
            assert!(
                g.data().iter().any(|&v| v != 0.0),
                "param {} has zero grad",
                p.name()
            );
        }
    }

    #[test]
    fn embedding_generator_shapes() {
        let mut rng = StreamRng::new(5, "embed-gen");
        let gen = EmbeddingGenerator::<f32>::new("g", EmbeddingGeneratorConfig::default(), &mut rng);
        let z = Tensor::from_f64([3, 14], &rng.uniform_vec(42, -1.0, 1.0)).unwrap();
        let x = Tensor::from_f64([3, 8], &rng.uniform_vec(24, 0.0, 1.0)).unwrap();
        let u = sample_noise::<f32>(&mut rng, &gen.noise_shape(3), 0.25);
        let y = gen.generate(&Tape::new(), &z, &x, &u).unwrap();
        assert_eq!(y.shape(), vec![3, 8, 8, 8]);
    }
}
