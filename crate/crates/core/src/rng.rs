//! Seeded, order-independent random streams.
//!
//! Every consumer asks for a stream by `(seed, domain, id)`. The stream is a
//! ChaCha8 keystream keyed from `(seed, domain)` with `id` as the ChaCha
//! stream number, so stream `id` yields the same values no matter which
//! thread draws it or in what order streams are opened.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates the key spaces of independent consumers sharing one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    GlobalPermutation = 1,
    LocalPermutation = 2,
    SynthCounts = 3,
    SynthEvents = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream(seed: u64, domain: Domain, id: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = seed ^ (domain as u64).rotate_left(32);
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(id);
    rng
}
