//! Deterministic random streams.
//!
//! Every stochastic object is driven by a [`Stream`]: a xoshiro256** generator
//! whose 256-bit state is filled by splitmix64 from a 64-bit seed. Independent
//! work items (Monte Carlo blocks, trees in a sweep) take their seed from
//! [`derive_seed`], so results do not depend on scheduling.
//!
//! Draw conventions, fixed so that other implementations of the same
//! generator reproduce every run bit for bit:
//!
//! - `uniform()`: `(next_u64() >> 11) * 2^-53`, a double in `[0, 1)`.
//! - `below(n)`: `(next_u64() as u128 * n) >> 64` (multiply-shift, one draw).
//! - `categorical(p)`: one `uniform()` draw `u`; returns the first `j` with
//!   `u < p_0 + ... + p_j`, falling back to the last index with `p_j > 0`.

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One splitmix64 output step applied to `state`.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of sub-stream `stream` of `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream.wrapping_mul(GOLDEN_GAMMA)))
}

#[derive(Debug, Clone)]
pub struct Stream {
    inner: Xoshiro256StarStar,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    pub fn substream(master: u64, stream: u64) -> Self {
        Self::new(derive_seed(master, stream))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Draws an index according to the probability vector `p`.
    pub fn categorical(&mut self, p: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        for (j, &pj) in p.iter().enumerate() {
            acc += pj;
            if u < acc {
                return j;
            }
        }
        p.iter().rposition(|&pj| pj > 0.0).unwrap_or(p.len() - 1)
    }
}
