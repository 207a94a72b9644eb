//! Seeded random streams.
//!
//! The generator is ChaCha8 (`rand_chacha::ChaCha8Rng`), whose output stream
//! is fixed by its specification and independent of platform and endianness.
//! Uniforms take the top 53 bits of a `u64`; normals use the Box-Muller
//! transform on pairs of uniforms, so no platform math library sampling is
//! involved.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::tensor::Tensor;

/// Named sub-streams derived from a run seed.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SHIFT: u64 = 2;
    pub const PARAMS: u64 = 3;
    pub const OUTPUT_NOISE: u64 = 4;
    pub const DATA: u64 = 5;
    pub const LABELS: u64 = 6;
    pub const SHUFFLE: u64 = 7;
    pub const SEARCH: u64 = 8;
    pub const TARGET: u64 = 9;
}

/// Derives an independent seed from `seed` and a stream tag (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// A fresh generator on the sub-stream `stream` of this generator's seed.
    pub fn substream(&self, stream: u64) -> Self {
        Self::new(derive_seed(self.seed, stream))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n` by rejection sampling.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    /// Standard normal sample.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Tensor of i.i.d. normal samples with mean `mu` and standard deviation `sigma`.
///
/// `sigma == 0` yields a constant tensor. Negative `sigma` panics.
pub fn gaussian_draw(rng: &mut SeededRng, shape: &[usize], mu: f64, sigma: f64) -> Tensor {
    assert!(sigma >= 0.0, "sigma must be non-negative, got {sigma}");
    let len = shape.iter().product();
    let data = (0..len).map(|_| mu + sigma * rng.normal()).collect();
    Tensor::from_vec(shape, data).expect("shape and data agree")
}
