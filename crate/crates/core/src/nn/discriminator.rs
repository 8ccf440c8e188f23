//! The frame discriminator: five residual multiscale blocks.
//!
//! Each block runs parallel 3/5/7 convolutions (paddings 1/2/3), sums them
//! with a residual connection, applies the activation and max-pools, so both
//! local speckle-scale texture and global anatomy contribute to the realism
//! score. Five blocks take a 32x32 frame to 1x1 before the linear head.
//!
//! The default mode scores independent frames. Video mode inserts a
//! temporal convolution into every block and scores whole clips; it shares
//! the architecture but is a separately-parameterized instantiation.

use crate::rng::StreamRng;
use crate::scalar::Scalar;
use crate::tensor::{Param, Parametrized, Result, Tape, Tensor, Var};

use super::layers::{per_frame, Conv2d, Linear, TemporalConv};

const LEAK: f64 = 0.2;
pub const BLOCKS: usize = 5;

struct MultiscaleBlock<T> {
    k3: Conv2d<T>,
    k5: Conv2d<T>,
    k7: Conv2d<T>,
    temporal: Option<TemporalConv<T>>,
}

impl<T: Scalar> MultiscaleBlock<T> {
    fn new(name: &str, ch: usize, video: bool, rng: &mut StreamRng) -> Self {
        Self {
            k3: Conv2d::new(&format!("{name}.k3"), ch, ch, 3, 1, 1, rng),
            k5: Conv2d::new(&format!("{name}.k5"), ch, ch, 5, 1, 2, rng),
            k7: Conv2d::new(&format!("{name}.k7"), ch, ch, 7, 1, 3, rng),
            temporal: video.then(|| TemporalConv::new(&format!("{name}.temporal"), ch, ch, 3, rng)),
        }
    }

    /// `x + conv3(x) + conv5(x) + conv7(x)`, activation, 2x2 max-pool.
    fn forward_frames(&self, x: &Var<T>) -> Result<Var<T>> {
        let sum = x
            .add(&self.k3.forward(x)?)?
            .add(&self.k5.forward(x)?)?
            .add(&self.k7.forward(x)?)?;
        sum.leaky_relu(LEAK).maxpool2d((2, 2), (2, 2))
    }

    fn forward_video(&self, x: &Var<T>) -> Result<Var<T>> {
        let spatial = per_frame(x, |frames| {
            let sum = frames
                .add(&self.k3.forward(frames)?)?
                .add(&self.k5.forward(frames)?)?
                .add(&self.k7.forward(frames)?)?;
            Ok(sum.leaky_relu(LEAK))
        })?;
        let t = self
            .temporal
            .as_ref()
            .expect("video block has a temporal conv")
            .forward(&spatial)?
            .leaky_relu(LEAK);
        per_frame(&t, |frames| frames.maxpool2d((2, 2), (2, 2)))
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut ps = Vec::new();
        ps.extend(self.k3.params());
        ps.extend(self.k5.params());
        ps.extend(self.k7.params());
        if let Some(t) = &self.temporal {
            ps.extend(t.params());
        }
        ps
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut ps = Vec::new();
        ps.extend(self.k3.params_mut());
        ps.extend(self.k5.params_mut());
        ps.extend(self.k7.params_mut());
        if let Some(t) = &mut self.temporal {
            ps.extend(t.params_mut());
        }
        ps
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DiscriminatorConfig {
    pub size: usize,
    pub channels: usize,
    /// Score whole clips (temporal convs in each block) instead of frames.
    pub video_mode: bool,
    /// Frames per clip; only used in video mode for the head width.
    pub frames: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            size: 32,
            channels: 12,
            video_mode: false,
            frames: 8,
        }
    }
}

pub struct FrameDiscriminator<T> {
    pub cfg: DiscriminatorConfig,
    stem: Conv2d<T>,
    blocks: Vec<MultiscaleBlock<T>>,
    head: Linear<T>,
}

impl<T: Scalar> FrameDiscriminator<T> {
    pub fn new(name: &str, cfg: DiscriminatorConfig, rng: &mut StreamRng) -> Self {
        assert_eq!(
            cfg.size,
            1 << BLOCKS,
            "five halvings must reach 1x1: size must be 32"
        );
        let stem = Conv2d::new(&format!("{name}.stem"), 1, cfg.channels, 3, 1, 1, rng);
        let blocks = (0..BLOCKS)
            .map(|i| MultiscaleBlock::new(&format!("{name}.block{i}"), cfg.channels, cfg.video_mode, rng))
            .collect();
        let head_in = if cfg.video_mode {
            cfg.channels * cfg.frames
        } else {
            cfg.channels
        };
        let head = Linear::new(&format!("{name}.head"), head_in, 1, rng);
        Self {
            cfg,
            stem,
            blocks,
            head,
        }
    }

    /// Frame mode: `[m,1,s,s] -> [m,1]`, one realism score per frame.
    pub fn score_frames(&self, frames: &Var<T>) -> Result<Var<T>> {
        assert!(!self.cfg.video_mode, "frame scoring on a video-mode discriminator");
        let mut h = self.stem.forward(frames)?.leaky_relu(LEAK);
        for block in &self.blocks {
            h = block.forward_frames(&h)?;
        }
        let m = h.shape()[0];
        let flat = h.reshape([m, self.cfg.channels])?;
        self.head.forward(&flat)
    }

    /// Video mode: `[n,1,f,s,s] -> [n,1]`, one score per clip.
    pub fn score_video(&self, video: &Var<T>) -> Result<Var<T>> {
        assert!(self.cfg.video_mode, "video scoring on a frame-mode discriminator");
        let mut h = per_frame(video, |f| self.stem.forward(f))?.leaky_relu(LEAK);
        for block in &self.blocks {
            h = block.forward_video(&h)?;
        }
        let s = h.shape();
        let flat = h.reshape([s[0], s[1] * s[2]])?;
        self.head.forward(&flat)
    }

    /// Convenience entry point from a plain tensor.
    pub fn discriminate(&self, tape: &Tape<T>, frames: &Tensor<T>) -> Result<Var<T>> {
        self.score_frames(&tape.input(frames.clone()))
    }
}

impl<T: Scalar> Parametrized<T> for FrameDiscriminator<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut ps = Vec::new();
        ps.extend(self.stem.params());
        for b in &self.blocks {
            ps.extend(b.params());
        }
        ps.extend(self.head.params());
        ps
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut ps = Vec::new();
        ps.extend(self.stem.params_mut());
        for b in &mut self.blocks {
            ps.extend(b.params_mut());
        }
        ps.extend(self.head.params_mut());
        ps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_blocks_reduce_32_to_scalar() {
        let mut rng = StreamRng::new(31, "disc");
        let d = FrameDiscriminator::<f32>::new("d", DiscriminatorConfig::default(), &mut rng);
        let frames = Tensor::from_f64([7, 1, 32, 32], &rng.uniform_vec(7 * 1024, 0.0, 1.0)).unwrap();
        let scores = d.discriminate(&Tape::new(), &frames).unwrap();
        assert_eq!(scores.shape(), vec![7, 1]);
    }

    #[test]
    fn video_and_frame_modes_differ_in_parameter_count() {
        let mut rng = StreamRng::new(32, "disc");
        let frame = FrameDiscriminator::<f32>::new("d2", DiscriminatorConfig::default(), &mut rng);
        let video = FrameDiscriminator::<f32>::new(
            "d3",
            DiscriminatorConfig {
                video_mode: true,
                ..DiscriminatorConfig::default()
            },
            &mut rng,
        );
        let frame_params = frame.param_count();
        let video_params = video.param_count();
        assert!(video_params > frame_params, "{video_params} vs {frame_params}");

        let clip = Tensor::from_f64([2, 1, 8, 32, 32], &rng.uniform_vec(2 * 8 * 1024, 0.0, 1.0)).unwrap();
        let tape = Tape::new();
        let scores = video.score_video(&tape.input(clip)).unwrap();
        assert_eq!(scores.shape(), vec![2, 1]);
    }

    #[test]
    fn all_parallel_kernel_paths_contribute() {
        let mut rng = StreamRng::new(33, "disc");
        let mut d = FrameDiscriminator::<f32>::new("d", DiscriminatorConfig::default(), &mut rng);
        let frames = Tensor::from_f64([1, 1, 32, 32], &rng.uniform_vec(1024, 0.0, 1.0)).unwrap();
        let before = d.discriminate(&Tape::new(), &frames).unwrap().value().item();

        // Zero the k5 and k7 paths of every block: the output must move.
        for p in d.params_mut() {
            if p.name().contains(".k5.") || p.name().contains(".k7.") {
                p.value = Tensor::zeros(p.value.shape().to_vec());
            }
        }
        let after = d.discriminate(&Tape::new(), &frames).unwrap().value().item();
        assert_ne!(before, after);
    }
}
