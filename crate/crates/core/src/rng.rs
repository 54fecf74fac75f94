//! Counter-based random streams keyed by `(seed, domain, index)`.
//!
//! Each stream is a ChaCha8 keystream: the key is derived from the user seed and a
//! domain tag, the 64-bit stream id is the index. Streams never overlap, so paths can be
//! simulated in any order or on any worker and still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags separating the independent uses of one user seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Offsets = 1,
    Paths = 2,
    Environments = 3,
    Brownian = 4,
    Selection = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed; used to give every sampled environment its own seed.
pub fn derive_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(domain as u64)) ^ index)
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = splitmix64(seed) ^ (domain as u64).rotate_left(32);
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
