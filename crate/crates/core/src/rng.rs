//! Deterministic random streams.
//!
//! Every Monte-Carlo consumer derives its own ChaCha stream from the run seed
//! and a list of tags (SNR index, frame index, chain index, ...). Streams never
//! share state, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Returns the RNG stream for `seed` identified by `tags`.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut id = 0x5eed_u64;
    for &t in tags {
        id = splitmix(id ^ t);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Mixes tags into a fresh 64-bit seed.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    let mut z = splitmix(seed);
    for &t in tags {
        z = splitmix(z ^ t);
    }
    z
}
