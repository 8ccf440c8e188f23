//! The expert: a factorized spatiotemporal regressor mapping a video to an
//! ejection-fraction estimate in `[0, 1]`.
//!
//! Four stages of strided spatial conv + temporal conv, then a global mean
//! and a sigmoid head. Deliberately small: it runs alongside the generator
//! and discriminator during twin training, frozen, with gradients flowing
//! through it into the generator.

use crate::rng::StreamRng;
use crate::scalar::Scalar;
use crate::tensor::{Param, Parametrized, Result, Tape, Tensor, Var};

use super::layers::{per_frame, Conv2d, TemporalConv};

const LEAK: f64 = 0.2;

#[derive(Clone, Copy, Debug)]
pub struct ExpertConfig {
    pub frames: usize,
    pub size: usize,
    /// Stage channel widths (each stage halves the spatial extent).
    pub channels: [usize; 4],
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            frames: 8,
            size: 32,
            channels: [8, 16, 32, 64],
        }
    }
}

pub struct ExpertRegressor<T> {
    pub cfg: ExpertConfig,
    stages: Vec<(Conv2d<T>, TemporalConv<T>)>,
    head: Param<T>,
    head_bias: Param<T>,
}

impl<T: Scalar> ExpertRegressor<T> {
    pub fn new(name: &str, cfg: ExpertConfig, rng: &mut StreamRng) -> Self {
        assert!(cfg.size % 16 == 0, "size must be divisible by 16");
        let mut stages = Vec::with_capacity(4);
        let mut in_ch = 1;
        for (i, &out_ch) in cfg.channels.iter().enumerate() {
            let spatial = Conv2d::new(&format!("{name}.s{i}"), in_ch, out_ch, 3, 2, 1, rng);
            let temporal = TemporalConv::new(&format!("{name}.t{i}"), out_ch, out_ch, 3, rng);
            stages.push((spatial, temporal));
            in_ch = out_ch;
        }
        let c_last = cfg.channels[3];
        let bound = (1.0 / c_last as f64).sqrt();
        let head = Param::new(
            format!("{name}.head.weight"),
            Tensor::from_f64([c_last, 1], &rng.uniform_vec(c_last, -bound, bound)).unwrap(),
        );
        let head_bias = Param::new(format!("{name}.head.bias"), Tensor::zeros([1, 1]));
        Self {
            cfg,
            stages,
            head,
            head_bias,
        }
    }

    /// `video: [n,1,f,s,s] -> [n,1]` in `[0,1]`.
    pub fn predict(&self, tape: &Tape<T>, video: &Tensor<T>) -> Result<Var<T>> {
        self.predict_var(&tape.input(video.clone()))
    }

    /// Same forward on an already-tracked video (used when expert gradients
    /// must flow back into a generator).
    pub fn predict_var(&self, video: &Var<T>) -> Result<Var<T>> {
        let n = video.shape()[0];
        let mut h = video.clone();
        for (spatial, temporal) in &self.stages {
            h = per_frame(&h, |f| spatial.forward(f))?.leaky_relu(LEAK);
            h = temporal.forward(&h)?.leaky_relu(LEAK);
        }
        // Global average over frames and space: [n,c,f,h,w] -> [n,c]
        let s = h.shape();
        let (c, fhw) = (s[1], s[2] * s[3] * s[4]);
        let flat = h.reshape([n, c, fhw])?;
        // mean over the trailing axis via broadcasted ones matmul
        let pooled = flat
            .reshape([n * c, fhw])?
            .matmul(&video.tape().input(Tensor::full([fhw, 1], T::cast(1.0 / fhw as f64))))?
            .reshape([n, c])?;
        let w = video.tape().param(&self.head);
        let b = video.tape().param(&self.head_bias);
        let logits = pooled.matmul(&w)?.add(&b.broadcast(&[n, 1])?)?;
        Ok(logits.sigmoid())
    }
}

impl<T: Scalar> Parametrized<T> for ExpertRegressor<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut ps = Vec::new();
        for (s, t) in &self.stages {
            ps.extend(s.params());
            ps.extend(t.params());
        }
        ps.push(&self.head);
        ps.push(&self.head_bias);
        ps
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut ps = Vec::new();
        for (s, t) in &mut self.stages {
            ps.extend(s.params_mut());
            ps.extend(t.params_mut());
        }
        ps.push(&mut self.head);
        ps.push(&mut self.head_bias);
        ps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_is_bounded_scalar_per_item() {
        let mut rng = StreamRng::new(21, "expert");
        let expert = ExpertRegressor::<f32>::new(
            "e",
            ExpertConfig {
                frames: 4,
                size: 16,
                channels: [4, 8, 8, 16],
            },
            &mut rng,
        );
        let video = Tensor::from_f64([3, 1, 4, 16, 16], &rng.uniform_vec(3 * 4 * 256, 0.0, 1.0)).unwrap();
        let y = expert.predict(&Tape::new(), &video).unwrap();
        assert_eq!(y.shape(), vec![3, 1]);
        assert!(y.value().data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn constant_black_video_is_tolerated() {
        let mut rng = StreamRng::new(22, "expert");
        let expert = ExpertRegressor::<f32>::new(
            "e",
            ExpertConfig {
                frames: 4,
                size: 16,
                channels: [4, 8, 8, 16],
            },
            &mut rng,
        );
        let video = Tensor::zeros([1, 1, 4, 16, 16]);
        let y = expert.predict(&Tape::new(), &video).unwrap();
        let v = y.value().item();
        assert!((0.0..=1.0).contains(&v));
    }
}
