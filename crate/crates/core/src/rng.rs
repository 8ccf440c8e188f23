//! Deterministic random streams.
//!
//! Every random draw in the crate goes through a [`StreamRng`], a ChaCha8
//! counter-based stream derived from `(seed, component label)`. Components
//! (data generation, weight init, noise sampling, ...) each get their own
//! stream, so adding draws to one component never shifts another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// 64-bit FNV-1a over a label; stable across platforms.
fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// A named, reproducible random stream.
#[derive(Clone, Debug)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    /// Stream for `component` under the run-wide `seed`.
    pub fn new(seed: u64, component: &str) -> Self {
        let derived = splitmix64(seed ^ fnv1a(component));
        Self {
            inner: ChaCha8Rng::seed_from_u64(derived),
        }
    }

    /// Child stream keyed by an index (per-sample, per-epoch, ...).
    pub fn derive(&self, index: u64) -> Self {
        let mut probe = self.inner.clone();
        let base: u64 = probe.gen();
        Self {
            inner: ChaCha8Rng::seed_from_u64(splitmix64(base ^ splitmix64(index))),
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.gen_range(lo..hi)
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        Normal::new(mean, std).expect("valid normal").sample(&mut self.inner)
    }

    /// Rayleigh draw scaled to unit mean, by inverse-CDF sampling.
    pub fn rayleigh_mean1(&mut self) -> f64 {
        let sigma = (2.0 / std::f64::consts::PI).sqrt();
        let u: f64 = self.inner.gen_range(0.0..1.0);
        sigma * (-2.0 * (1.0 - u).ln()).sqrt()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn u64(&mut self) -> u64 {
        self.inner.gen()
    }

    pub fn bool(&mut self, p: f64) -> bool {
        self.inner.gen_bool(p)
    }

    pub fn uniform_vec(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| self.uniform(lo, hi)).collect()
    }

    pub fn normal_vec(&mut self, n: usize, mean: f64, std: f64) -> Vec<f64> {
        let dist = Normal::new(mean, std).expect("valid normal");
        (0..n).map(|_| dist.sample(&mut self.inner)).collect()
    }

    /// Fisher-Yates shuffle of indices `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.inner.gen_range(0..=i);
            idx.swap(i, j);
        }
        idx
    }
}
