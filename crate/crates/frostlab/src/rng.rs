//! Seeded randomness with a frozen byte stream.
//!
//! All sampling helpers are written out here rather than pulled from a
//! distributions crate so golden tests stay stable across dependency
//! upgrades. ChaCha8 supplies the stream; splitmix64 folds structured
//! seeds (run seed, epoch, sample index, ...) into a key.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    /// Derive a generator from any number of seed components.
    pub fn from_parts(parts: &[u64]) -> Self {
        let mut state = 0x5eed_f00d_u64;
        for &p in parts {
            state ^= splitmix64(&mut { p });
            state = splitmix64(&mut state);
        }
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self {
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::from_parts(&[seed])
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1).
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.unit_f64() * (hi - lo)
    }

    pub fn range_f32(&mut self, lo: f32, hi: f32) -> f32 {
        self.range_f64(lo as f64, hi as f64) as f32
    }

    /// Uniform in [0, n). Modulo bias is below 2^-40 for every n used here.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box-Muller (cosine branch only).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.unit_f64(); // (0, 1]
        let u2 = self.unit_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.below(i + 1);
            slice.swap(i, j);
        }
    }

    /// First `k` elements of a shuffled 0..n, without replacement.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }

    /// Draw a class from an explicit probability row.
    pub fn categorical(&mut self, probs: &[f32]) -> usize {
        let u = self.unit_f64();
        let mut acc = 0.0f64;
        for (i, &p) in probs.iter().enumerate() {
            acc += p as f64;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }
}
