//! Counter-based random numbers used by the mask samplers.
//!
//! The generator is SplitMix64: the `k`-th output for a key `s` is
//! `mix64(s + k * 0x9E3779B97F4A7C15)` with `k` starting at 1, where `mix64`
//! is the SplitMix64 finalizer. Bounded integers use the multiply-shift map
//! `(x * n) >> 64` on 128-bit intermediates. Permutations are partial
//! Fisher-Yates shuffles: for `i` in `0..k`, swap slot `i` with slot
//! `i + below(m - i)`, then keep the first `k` slots.
//!
//! Everything here is a pure function of its inputs so masks can be
//! re-derived by anyone holding the seed.

pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent key for a sub-stream (for instance one per
/// training step and batch slot).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream.wrapping_add(GOLDEN_GAMMA)))
}

#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { key: seed, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// First `k` entries of a seeded partial Fisher-Yates shuffle of `items`.
    pub fn choose<T: Copy>(&mut self, items: &[T], k: usize) -> Vec<T> {
        let mut pool = items.to_vec();
        let m = pool.len();
        let k = k.min(m);
        for i in 0..k {
            let j = i + self.below((m - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
