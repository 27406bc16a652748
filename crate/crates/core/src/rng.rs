//! Deterministic random streams.
//!
//! Every trajectory owns one [`RngStream`], a SplitMix64 generator. The
//! complete contract, so that runs can be reproduced bit-for-bit elsewhere:
//!
//! ```text
//! mix64(z):  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!            z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!            return z ^ (z >> 31)                       (wrapping u64 arithmetic)
//!
//! next_u64:  state = state + 0x9E3779B97F4A7C15; return mix64(state)
//! next_f64:  (next_u64 >> 11) * 2^-53                   (uniform on [0, 1))
//!
//! trajectory_seed(master, i) = mix64(master ^ mix64((i + 1) * 0x9E3779B97F4A7C15))
//! ```
//!
//! A trajectory stream starts with `state = trajectory_seed(master, i)` and
//! consumes exactly one `next_f64` per Markov step.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trajectory `index` in an ensemble driven by `master_seed`.
pub fn trajectory_seed(master_seed: u64, index: u64) -> u64 {
    mix64(master_seed ^ mix64(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    state: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Stream of trajectory `index` under `master_seed`.
    pub fn for_trajectory(master_seed: u64, index: u64) -> Self {
        Self::new(trajectory_seed(master_seed, index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform draw on `[0, 1)` with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform draw on `[-1, 1)`.
    pub fn next_signed(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }
}
