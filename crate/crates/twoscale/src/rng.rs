//! Seeded random streams for probe directions and randomized test fields.
//! All randomness in the crate flows through here so runs are reproducible.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform sample in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform sample in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Random unit vector in the first `dim` components.
    pub fn unit_vector(&mut self, dim: usize) -> [f64; 2] {
        if dim == 1 {
            [if self.uniform() < 0.5 { -1.0 } else { 1.0 }, 0.0]
        } else {
            let theta = 2.0 * std::f64::consts::PI * self.uniform();
            [theta.cos(), theta.sin()]
        }
    }
}
