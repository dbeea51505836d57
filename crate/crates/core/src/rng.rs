//! Reproducible random streams.
//!
//! Every random draw in the crate flows from a single `u64` seed through the
//! scheme below, so an independent implementation can regenerate identical
//! benchmarks:
//!
//! * Generator: xoshiro256++ seeded from a `u64` by running SplitMix64 four
//!   times to fill the 256-bit state.
//! * Child streams: `seed.derive(label)` yields
//!   `mix(seed ^ mix(label + 0x9E3779B97F4A7C15))`, where `mix` is the
//!   SplitMix64 output finalizer.
//! * Uniform `f64` in `[0, 1)`: `(next_u64 >> 11) * 2^-53`.
//! * Integer in `[0, n)`: Lemire's widening multiply with rejection.
//! * Standard normal: Box-Muller, cosine branch only, `u1 = 1 - uniform`.
//! * Shuffle: Fisher-Yates from the last index down.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A seed that can be split into labeled, independent child seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(pub u64);

impl Seed {
    pub fn derive(self, label: u64) -> Seed {
        Seed(mix64(self.0 ^ mix64(label.wrapping_add(GOLDEN_GAMMA))))
    }

    pub fn rng(self) -> LoreRng {
        LoreRng::from_seed(self)
    }
}

/// Stream labels, kept in one place so generators stay reproducible.
pub mod label {
    pub const BASIS_INIT: u64 = 1;
    pub const TRUE_BASIS: u64 = 2;
    pub const USER_WEIGHTS: u64 = 3;
    pub const ITEMS: u64 = 4;
    pub const PAIRING: u64 = 5;
    pub const LABELS: u64 = 6;
    pub const SHUFFLE: u64 = 7;
    pub const CURVE: u64 = 8;
    pub const VALIDATION: u64 = 9;
    pub const POLICY_INIT: u64 = 10;
}

#[derive(Debug, Clone)]
pub struct LoreRng {
    inner: Xoshiro256PlusPlus,
}

impl LoreRng {
    pub fn from_seed(seed: Seed) -> Self {
        LoreRng {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed.0),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`.
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Uniform integer in `[0, n)`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `[0, n)` in draw order (partial Fisher-Yates).
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} of {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
