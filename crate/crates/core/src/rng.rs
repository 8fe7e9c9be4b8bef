//! Deterministic random streams for the samplers.
//!
//! Every stream is a ChaCha8 keystream: the 64-bit seed is expanded to the
//! 256-bit key by `rand_core`'s documented PCG32-based `seed_from_u64`, and
//! the 64-bit stream id selects an independent counter space under the same
//! key. Sweep point `k` of a run seeded with `s` draws from stream `k` of key
//! `s`, so points can be sampled in any order or on any number of workers.
//! Uniform doubles take the top 53 bits of each 64-bit output.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub struct Stream {
    inner: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// `true` with probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}
