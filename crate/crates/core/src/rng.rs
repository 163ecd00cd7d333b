//! Counter-based random streams.
//!
//! Every stream is a pair `(key, counter)`; the `i`-th output is
//! `mix(key + i * GAMMA)`. Streams for independent repetitions are keyed by
//! hashing the base seed together with a path of stream indices, so a given
//! repetition draws the same numbers no matter which worker runs it or in
//! what order.

use rand::RngCore;

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// The SplitMix64 / Stafford variant 13 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn from_key(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    /// Stream for repetition `rep` of a sweep seeded with `base_seed`.
    pub fn for_rep(base_seed: u64, rep: u64) -> Self {
        Self::derive(base_seed, &[rep])
    }

    /// Stream addressed by an arbitrary path of indices below `base_seed`.
    pub fn derive(base_seed: u64, path: &[u64]) -> Self {
        let mut key = mix64(base_seed ^ 0x5851_f42d_4c95_7f2d);
        for (depth, &idx) in path.iter().enumerate() {
            key = mix64(key ^ mix64(idx.wrapping_add((depth as u64 + 1).wrapping_mul(GAMMA))));
        }
        Self::from_key(key)
    }

    /// Number of 64-bit words drawn so far.
    pub fn position(&self) -> u64 {
        self.counter
    }

    /// Jumps to an absolute position in the stream.
    pub fn seek(&mut self, position: u64) {
        self.counter = position;
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(0, 1]`; safe to take the logarithm of.
    #[inline]
    pub fn uniform_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased integer in `0..bound` (Lemire's multiply-and-reject).
    #[inline]
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        let mut m = (self.next_u64() as u128) * (bound as u128);
        let mut low = m as u64;
        if low < bound {
            let threshold = bound.wrapping_neg() % bound;
            while low < threshold {
                m = (self.next_u64() as u128) * (bound as u128);
                low = m as u64;
            }
        }
        (m >> 64) as u64
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let out = mix64(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)));
        self.counter = self.counter.wrapping_add(1);
        out
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Uniformly random permutation of `0..n`.
pub fn random_permutation(rng: &mut CounterRng, n: usize) -> Vec<u32> {
    let mut order: Vec<u32> = (0..n as u32).collect();
    rng.shuffle(&mut order);
    order
}
