//! Building-block layers and the (2+1)D video helpers.
//!
//! Video tensors are `[batch, channels, frames, height, width]`. Spatial
//! layers fold frames into the batch axis; temporal layers view the clip as
//! `[batch, channels, frames, h*w]` and convolve along the frame axis with a
//! `k x 1` kernel, so a full 3-d convolution never exists.

use crate::rng::StreamRng;
use crate::scalar::Scalar;
use crate::tensor::{Param, Result, Tensor, Var};

fn uniform_init<T: Scalar>(rng: &mut StreamRng, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let bound = (1.0 / fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    Tensor::from_f64(shape.to_vec(), &rng.uniform_vec(numel, -bound, bound)).expect("init shape")
}

/// 2-d convolution layer, `weight: [out, in, k, k]`.
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut StreamRng,
    ) -> Self {
        let fan_in = in_ch * k * k;
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                uniform_init(rng, &[out_ch, in_ch, k, k], fan_in),
            ),
            bias: Param::new(format!("{name}.bias"), uniform_init(rng, &[out_ch], fan_in)),
            stride: (stride, stride),
            pad: (pad, pad),
        }
    }

    pub fn forward(&self, x: &Var<T>) -> Result<Var<T>> {
        let w = x.tape().param(&self.weight);
        let b = x.tape().param(&self.bias);
        x.conv2d(&w, Some(&b), self.stride, self.pad)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Transposed 2-d convolution, `weight: [in, out, k, k]`.
pub struct ConvT2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl<T: Scalar> ConvT2d<T> {
    pub fn new(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut StreamRng,
    ) -> Self {
        let fan_in = in_ch * k * k;
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                uniform_init(rng, &[in_ch, out_ch, k, k], fan_in),
            ),
            bias: Param::new(format!("{name}.bias"), uniform_init(rng, &[out_ch], fan_in)),
            stride: (stride, stride),
            pad: (pad, pad),
        }
    }

    pub fn forward(&self, x: &Var<T>) -> Result<Var<T>> {
        let w = x.tape().param(&self.weight);
        let b = x.tape().param(&self.bias);
        x.conv2d_transposed(&w, Some(&b), self.stride, self.pad)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Fully connected layer, `weight: [in, out]`; input `[n, in]`.
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, rng: &mut StreamRng) -> Self {
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                uniform_init(rng, &[in_dim, out_dim], in_dim),
            ),
            bias: Param::new(format!("{name}.bias"), uniform_init(rng, &[1, out_dim], in_dim)),
        }
    }

    pub fn forward(&self, x: &Var<T>) -> Result<Var<T>> {
        let w = x.tape().param(&self.weight);
        let b = x.tape().param(&self.bias);
        let n = x.shape()[0];
        let out_dim = self.weight.value.shape()[1];
        x.matmul(&w)?.add(&b.broadcast(&[n, out_dim])?)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Apply a spatial (per-frame) function to a `[n,c,f,h,w]` video by folding
/// frames into the batch axis.
pub fn per_frame<T: Scalar>(
    x: &Var<T>,
    f: impl FnOnce(&Var<T>) -> Result<Var<T>>,
) -> Result<Var<T>> {
    let s = x.shape();
    let (n, c, frames, h, w) = (s[0], s[1], s[2], s[3], s[4]);
    let folded = x.permute(&[0, 2, 1, 3, 4])?.reshape([n * frames, c, h, w])?;
    let y = f(&folded)?;
    let ys = y.shape();
    let (c2, h2, w2) = (ys[1], ys[2], ys[3]);
    y.reshape([n, frames, c2, h2, w2])?.permute(&[0, 2, 1, 3, 4])
}

/// Nearest-neighbor spatial upsampling of a `[n,c,f,h,w]` video.
pub fn upsample_video<T: Scalar>(x: &Var<T>, factor: usize) -> Result<Var<T>> {
    let s = x.shape();
    let (n, c, f, h, w) = (s[0], s[1], s[2], s[3], s[4]);
    x.reshape([n, c * f, h, w])?
        .upsample_nearest2d(factor)?
        .reshape([n, c, f, h * factor, w * factor])
}

/// Convolution along the frame axis with channel mixing: a `k x 1` conv on
/// the `[n,c,f,h*w]` view.
pub struct TemporalConv<T> {
    conv: Conv2d<T>,
}

impl<T: Scalar> TemporalConv<T> {
    pub fn new(name: &str, in_ch: usize, out_ch: usize, k: usize, rng: &mut StreamRng) -> Self {
        let fan_in = in_ch * k;
        let weight = Param::new(
            format!("{name}.weight"),
            uniform_init(rng, &[out_ch, in_ch, k, 1], fan_in),
        );
        let bias = Param::new(format!("{name}.bias"), uniform_init(rng, &[out_ch], fan_in));
        Self {
            conv: Conv2d {
                weight,
                bias,
                stride: (1, 1),
                pad: (k / 2, 0),
            },
        }
    }

    pub fn forward(&self, x: &Var<T>) -> Result<Var<T>> {
        let s = x.shape();
        let (n, c, frames, h, w) = (s[0], s[1], s[2], s[3], s[4]);
        let flat = x.reshape([n, c, frames, h * w])?;
        let y = self.conv.forward(&flat)?;
        let c2 = y.shape()[1];
        y.reshape([n, c2, frames, h, w])
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.conv.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.conv.params_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    #[test]
    fn per_frame_keeps_layout() {
        let mut rng = StreamRng::new(1, "layers");
        let conv = Conv2d::<f32>::new("c", 1, 4, 3, 2, 1, &mut rng);
        let tape = Tape::new();
        let video = tape.input(Tensor::from_f64([2, 1, 3, 8, 8], &rng.uniform_vec(2 * 3 * 64, 0.0, 1.0)).unwrap());
        let y = per_frame(&video, |frames| conv.forward(frames)).unwrap();
        assert_eq!(y.shape(), vec![2, 4, 3, 4, 4]);
    }

    #[test]
    fn temporal_conv_mixes_channels_along_frames() {
        let mut rng = StreamRng::new(2, "layers");
        let tconv = TemporalConv::<f32>::new("t", 3, 5, 3, &mut rng);
        let tape = Tape::new();
        let video = tape.input(Tensor::ones([1, 3, 4, 2, 2]));
        let y = tconv.forward(&video).unwrap();
        assert_eq!(y.shape(), vec![1, 5, 4, 2, 2]);
    }

    #[test]
    fn linear_shapes() {
        let mut rng = StreamRng::new(3, "layers");
        let lin = Linear::<f32>::new("l", 6, 2, &mut rng);
        let tape = Tape::new();
        let x = tape.input(Tensor::ones([5, 6]));
        assert_eq!(lin.forward(&x).unwrap().shape(), vec![5, 2]);
    }
}
