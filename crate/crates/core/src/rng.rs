//! Seeded, splittable random streams.
//!
//! Every replica draws from a ChaCha8 stream whose key is derived from the
//! master seed and a scope path (experiment kind, grid index, sub-stream)
//! and whose stream id is the replica index. Streams depend only on these
//! numbers, never on scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 256-bit key from `master` and a scope path.
pub fn derive_key(master: u64, scope: &[u64]) -> [u8; 32] {
    let mut state = master;
    let mut acc = splitmix64(&mut state);
    for &s in scope {
        state ^= s.wrapping_mul(0xD605_BBB5_8C8A_BB3D) ^ acc;
        acc = splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// The stream for replica `index` under `(master, scope)`.
pub fn stream(master: u64, scope: &[u64], index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::from_seed(derive_key(master, scope));
    rng.set_stream(index);
    rng
}

/// Stream for a single walk identified by a plain seed.
pub fn seeded(seed: u64) -> StreamRng {
    stream(seed, &[], 0)
}

/// Uniform small-integer draws that use a buffered word when the range is a
/// power of two, falling back to rejection sampling otherwise.
#[derive(Clone, Debug, Default)]
pub struct BitPool {
    word: u64,
    bits: u32,
}

impl BitPool {
    #[inline]
    pub fn below<R: RngCore>(&mut self, rng: &mut R, n: u32) -> u32 {
        debug_assert!(n >= 1);
        if n.is_power_of_two() {
            let k = n.trailing_zeros();
            if k == 0 {
                return 0;
            }
            if self.bits < k {
                self.word = rng.next_u64();
                self.bits = 64;
            }
            let out = (self.word & ((1u64 << k) - 1)) as u32;
            self.word >>= k;
            self.bits -= k;
            out
        } else {
            rng.gen_range(0..n)
        }
    }
}
