//! Deterministic, splittable randomness.
//!
//! A [`RngStream`] is a base seed plus a path of integers. Each distinct path
//! names an independent ChaCha8 stream, so trial `i` of an experiment can be
//! replayed on its own, on any thread, without touching the other trials.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    path: Vec<u64>,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            path: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Sub-stream `index` of this stream.
    pub fn child(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        RngStream {
            seed: self.seed,
            path,
        }
    }

    /// 256-bit ChaCha key for this (seed, path). The path length is mixed in
    /// so `[]` and `[0]` never collide.
    fn key(&self) -> [u8; 32] {
        let mut state = self.seed;
        let mut acc = splitmix64(&mut state);
        for &p in &self.path {
            state ^= p.wrapping_mul(0xD6E8_FEB8_6659_FD93);
            acc ^= splitmix64(&mut state);
        }
        state ^= self.path.len() as u64;
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
            let word = splitmix64(&mut state) ^ acc.rotate_left(i as u32 * 16);
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        key
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key())
    }
}
