//! Deterministic, portable random streams.
//!
//! A stream is a ChaCha8 generator keyed by `(seed, stream id)`. ChaCha is a
//! counter-based cipher, so a given `(seed, stream, position)` yields the same
//! bits on every platform. Each consumer (data noise, initialization,
//! variational sampling, tuning, ...) owns its own stream id, so adding draws
//! in one consumer never perturbs another.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::scalar::Real;

/// Stream identifiers reserved for each stochastic consumer.
pub mod streams {
    pub const DATA_NOISE: u64 = 1;
    pub const DATA_INPUTS: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const INIT: u64 = 4;
    pub const VARIATIONAL: u64 = 5;
    pub const BATCHES: u64 = 6;
    pub const PREDICT: u64 = 7;
    pub const TUNER: u64 = 8;
    pub const FOLDS: u64 = 9;
    pub const ORDERING: u64 = 10;
    pub const MANIFOLD: u64 = 11;
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

/// SplitMix64 finalizer, used to derive child seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Independent child stream, e.g. one per restart or per trial.
    pub fn child(seed: u64, stream: u64, index: u64) -> Self {
        Self::new(mix_seed(seed, index.wrapping_add(1)), stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 32-bit words consumed so far.
    pub fn word_position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform<T: Real>(&mut self) -> T {
        T::lit(self.rng.random::<f64>())
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_in<T: Real>(&mut self, lo: T, hi: T) -> T {
        lo + (hi - lo) * self.uniform::<T>()
    }

    pub fn normal<T: Real>(&mut self) -> T {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        T::lit(z)
    }

    pub fn normals<T: Real>(&mut self, n: usize) -> Vec<T> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Uniform integer in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        items.shuffle(&mut self.rng);
    }

    /// Random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_draws() {
        let mut a = RngStream::new(42, streams::INIT);
        let mut b = RngStream::new(42, streams::INIT);
        let xa: Vec<f64> = a.normals(16);
        let xb: Vec<f64> = b.normals(16);
        assert_eq!(xa, xb);
    }

    #[test]
    fn streams_are_independent() {
        let mut a = RngStream::new(42, streams::INIT);
        let mut b = RngStream::new(42, streams::VARIATIONAL);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn uniform_range() {
        let mut r = RngStream::new(7, 0);
        for _ in 0..1000 {
            let u: f64 = r.uniform_in(-2.0, 3.0);
            assert!((-2.0..3.0).contains(&u));
        }
    }

    #[test]
    fn permutation_is_bijection() {
        let mut r = RngStream::new(3, streams::ORDERING);
        let mut p = r.permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn child_seeds_differ() {
        let a = RngStream::child(1, 0, 0).next_u64();
        let b = RngStream::child(1, 0, 1).next_u64();
        assert_ne!(a, b);
    }
}
