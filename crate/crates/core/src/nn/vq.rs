//! Vector-quantized autoencoder.
//!
//! The encoder maps an image to a `q x h x w` latent grid; every grid cell
//! snaps to its nearest codebook vector (Euclidean, ties to the lowest
//! index). The quantization is non-differentiable, so the decoder input is
//! built with the straight-through estimator: forward it equals the
//! quantized tensor, backward the gradient passes to the encoder output
//! unchanged. The codebook learns from the codebook loss `||sg[z_e] - e||^2`
//! and the encoder is pulled toward the codebook by the commitment term
//! `beta * ||z_e - sg[e]||^2`.

use std::sync::Arc;

use crate::rng::StreamRng;
use crate::scalar::Scalar;
use crate::tensor::{Param, Parametrized, Result, Tape, Tensor, Var};

use super::layers::{Conv2d, ConvT2d};

const LEAK: f64 = 0.2;

#[derive(Clone, Copy, Debug)]
pub struct VqConfig {
    /// Input image extent (grid is `size/4`).
    pub size: usize,
    /// Codebook entries.
    pub k: usize,
    /// Embedding channels.
    pub q: usize,
    /// Commitment weight.
    pub beta: f64,
}

impl Default for VqConfig {
    fn default() -> Self {
        Self {
            size: 32,
            k: 64,
            q: 8,
            beta: 0.25,
        }
    }
}

pub struct VqOutput<T: Scalar> {
    pub reconstruction: Var<T>,
    /// Encoder output (pre-quantization).
    pub z_e: Var<T>,
    /// Straight-through quantized tensor fed to the decoder.
    pub z_q: Var<T>,
    /// Chosen codebook index per grid cell, row-major `[n, h, w]`.
    pub indices: Vec<usize>,
    pub codebook_loss: Var<T>,
    pub commitment_loss: Var<T>,
}

pub struct VqAutoencoder<T> {
    pub cfg: VqConfig,
    enc1: Conv2d<T>,
    enc2: Conv2d<T>,
    pub codebook: Param<T>,
    dec1: ConvT2d<T>,
    dec2: ConvT2d<T>,
}

impl<T: Scalar> VqAutoencoder<T> {
    pub fn new(name: &str, cfg: VqConfig, rng: &mut StreamRng) -> Self {
        assert!(cfg.size % 4 == 0, "size must be divisible by 4");
        let codebook = Param::new(
            format!("{name}.codebook"),
            Tensor::from_f64(
                [cfg.k, cfg.q],
                &rng.uniform_vec(cfg.k * cfg.q, -0.5, 0.5),
            )
            .unwrap(),
        );
        Self {
            cfg,
            enc1: Conv2d::new(&format!("{name}.enc1"), 1, 16, 4, 2, 1, rng),
            enc2: Conv2d::new(&format!("{name}.enc2"), 16, cfg.q, 4, 2, 1, rng),
            codebook,
            dec1: ConvT2d::new(&format!("{name}.dec1"), cfg.q, 16, 4, 2, 1, rng),
            dec2: ConvT2d::new(&format!("{name}.dec2"), 16, 1, 4, 2, 1, rng),
        }
    }

    pub fn grid(&self) -> usize {
        self.cfg.size / 4
    }

    fn encode_var(&self, images: &Var<T>) -> Result<Var<T>> {
        let h = self.enc1.forward(images)?.leaky_relu(LEAK);
        self.enc2.forward(&h)
    }

    fn decode_var(&self, z: &Var<T>) -> Result<Var<T>> {
        let h = self.dec1.forward(z)?.leaky_relu(LEAK);
        Ok(self.dec2.forward(&h)?.sigmoid())
    }

    /// Nearest codebook row per `q`-vector (ties resolve to the lowest index).
    fn nearest_indices(&self, rows: &Tensor<T>) -> Vec<usize> {
        let q = self.cfg.q;
        let code = self.codebook.value.data();
        rows.data()
            .chunks_exact(q)
            .map(|cell| {
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for k in 0..self.cfg.k {
                    let e = &code[k * q..(k + 1) * q];
                    let mut d = 0.0f64;
                    for (a, b) in cell.iter().zip(e) {
                        let diff = a.as_f64() - b.as_f64();
                        d += diff * diff;
                    }
                    if d < best_d {
                        best_d = d;
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    /// Full differentiable pass: reconstruction, index grid and both
    /// quantization losses.
    pub fn forward(&self, tape: &Tape<T>, images: &Tensor<T>) -> Result<VqOutput<T>> {
        let (n, s) = (images.shape()[0], images.shape()[2]);
        debug_assert_eq!(s, self.cfg.size);
        let g = self.grid();
        let x = tape.input(images.clone());
        let z_e = self.encode_var(&x)?;

        // [n,q,h,w] -> rows of q-vectors
        let z_rows = z_e.permute(&[0, 2, 3, 1])?.reshape([n * g * g, self.cfg.q])?;
        let indices = self.nearest_indices(&z_rows.value());
        let code = tape.param(&self.codebook);
        let z_q_rows = Var::embedding(&code, Arc::new(indices.clone()))?;

        let codebook_loss = z_q_rows.sub(&z_rows.detach())?.square()?.mean();
        let commitment_loss = z_rows.sub(&z_q_rows.detach())?.square()?.mean().scale(self.cfg.beta);

        // Straight-through: value of z_q, gradient of z_e.
        let st_rows = z_rows.add(&z_q_rows.sub(&z_rows)?.detach())?;
        let z_q = st_rows
            .reshape([n, g, g, self.cfg.q])?
            .permute(&[0, 3, 1, 2])?;
        let reconstruction = self.decode_var(&z_q)?;

        Ok(VqOutput {
            reconstruction,
            z_e,
            z_q,
            indices,
            codebook_loss,
            commitment_loss,
        })
    }

    /// Quantized embedding of `images` with no gradient tracking:
    /// `[n,1,s,s] -> [n,q,h,w]` plus the index grid.
    pub fn encode(&self, images: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
        let tape = Tape::new();
        let out = self.forward(&tape, images)?;
        Ok((out.z_q.value(), out.indices))
    }

    /// Decode an embedding grid (for qualitative reconstruction of generated
    /// embeddings): `[n,q,h,w] -> [n,1,s,s]`.
    pub fn decode(&self, embeddings: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let z = tape.input(embeddings.clone());
        Ok(self.decode_var(&z)?.value())
    }
}

impl<T: Scalar> Parametrized<T> for VqAutoencoder<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut ps = Vec::new();
        ps.extend(self.enc1.params());
        ps.extend(self.enc2.params());
        ps.push(&self.codebook);
        ps.extend(self.dec1.params());
        ps.extend(self.dec2.params());
        ps
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut ps = Vec::new();
        ps.extend(self.enc1.params_mut());
        ps.extend(self.enc2.params_mut());
        ps.push(&mut self.codebook);
        ps.extend(self.dec1.params_mut());
        ps.extend(self.dec2.params_mut());
        ps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_vq() -> (VqAutoencoder<f64>, StreamRng) {
        let mut rng = StreamRng::new(41, "vq");
        let vq = VqAutoencoder::new(
            "vq",
            VqConfig {
                size: 8,
                k: 8,
                q: 4,
                beta: 0.25,
            },
            &mut rng,
        );
        (vq, rng)
    }

    #[test]
    fn index_grid_is_within_codebook_range() {
        let (vq, mut rng) = tiny_vq();
        let images = Tensor::from_f64([2, 1, 8, 8], &rng.uniform_vec(128, 0.0, 1.0)).unwrap();
        let out = vq.forward(&Tape::new(), &images).unwrap();
        assert_eq!(out.indices.len(), 2 * 2 * 2);
        assert!(out.indices.iter().all(|&i| i < 8));
        assert_eq!(out.reconstruction.shape(), vec![2, 1, 8, 8]);
    }

    #[test]
    fn exact_codebook_match_has_zero_losses() {
        let (mut vq, _rng) = tiny_vq();
        // Make codebook row 3 match a known vector, then quantize that vector.
        let target = vec![0.1f64, -0.2, 0.3, -0.4];
        {
            let cb = &mut vq.codebook.value;
            let q = 4;
            let data = cb.data_mut();
            data[3 * q..4 * q].copy_from_slice(&target);
        }
        let rows = Tensor::new([1, 4], target.clone()).unwrap();
        let indices = vq.nearest_indices(&rows);
        assert_eq!(indices, vec![3]);

        // Codebook and commitment losses vanish when z_e equals the code.
        let tape = Tape::new();
        let z_rows = tape.input(rows);
        let code = tape.param(&vq.codebook);
        let z_q = Var::embedding(&code, Arc::new(indices)).unwrap();
        let cb_loss = z_q.sub(&z_rows.detach()).unwrap().square().unwrap().mean();
        let commit = z_rows.sub(&z_q.detach()).unwrap().square().unwrap().mean();
        assert_eq!(cb_loss.value().item(), 0.0);
        assert_eq!(commit.value().item(), 0.0);
    }

    #[test]
    fn ties_choose_the_lowest_index() {
        let (mut vq, _rng) = tiny_vq();
        // Two identical codebook rows; the earlier one must win.
        let row = vec![0.5f64, 0.5, 0.5, 0.5];
        {
            let data = vq.codebook.value.data_mut();
            data[2 * 4..3 * 4].copy_from_slice(&row);
            data[5 * 4..6 * 4].copy_from_slice(&row);
        }
        let rows = Tensor::new([1, 4], row).unwrap();
        assert_eq!(vq.nearest_indices(&rows), vec![2]);
    }

    #[test]
    fn straight_through_gradients_match_exactly() {
        let (vq, mut rng) = tiny_vq();
        let images = Tensor::from_f64([1, 1, 8, 8], &rng.uniform_vec(64, 0.0, 1.0)).unwrap();
        let tape = Tape::new();
        let out = vq.forward(&tape, &images).unwrap();
        // Reconstruction-only loss: gradient at encoder output must equal
        // gradient at the quantized tensor elementwise, exactly.
        let target = tape.input(Tensor::zeros([1, 1, 8, 8]));
        let loss = out.reconstruction.mse_loss(&target).unwrap();
        let grads = tape.backward(&loss).unwrap();
        let g_ze = grads.wrt(&out.z_e).expect("encoder grad");
        let g_zq = grads.wrt(&out.z_q).expect("quantized grad");
        // z_q is the [n,q,h,w] permuted view of the straight-through rows;
        // compare against z_e directly (same layout).
        assert_eq!(g_ze.shape(), g_zq.shape());
        for (a, b) in g_ze.data().iter().zip(g_zq.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn encode_decode_shapes() {
        let (vq, mut rng) = tiny_vq();
        let images = Tensor::from_f64([3, 1, 8, 8], &rng.uniform_vec(192, 0.0, 1.0)).unwrap();
        let (emb, idx) = vq.encode(&images).unwrap();
        assert_eq!(emb.shape(), &[3, 4, 2, 2]);
        assert_eq!(idx.len(), 12);
        let back = vq.decode(&emb).unwrap();
        assert_eq!(back.shape(), &[3, 1, 8, 8]);
    }
}
