//! Deterministic substream derivation.
//!
//! Every source of randomness in this crate is a pure function of a master
//! seed plus a list of integer tags (a domain tag, then indices such as the
//! subsample number or bootstrap replicate). Work items can therefore run in
//! any order, on any number of threads, and still reproduce bit-identical
//! results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags. Each independent stream family gets its own tag so that,
/// e.g., subsample draws never collide with bootstrap draws.
pub(crate) const TAG_SIM_ROW: u64 = 0x01;
pub(crate) const TAG_CV_SHUFFLE: u64 = 0x02;
pub(crate) const TAG_SUBSAMPLE: u64 = 0x03;
pub(crate) const TAG_SUBSAMPLE_PER_LAMBDA: u64 = 0x04;
pub(crate) const TAG_BOOTSTRAP: u64 = 0x05;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Collapses `(seed, tags)` into a single well-mixed 64-bit value.
/// Tag order matters: `[a, b]` and `[b, a]` yield unrelated streams.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut h = mix(seed ^ 0x6A09_E667_F3BC_C909);
    for &t in tags {
        h = mix(h.wrapping_add(GAMMA) ^ t);
    }
    h
}

/// RNG for the labeled substream `(seed, tags)`.
pub fn stream_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut s = derive_seed(seed, tags);
    for chunk in key.chunks_exact_mut(8) {
        s = s.wrapping_add(GAMMA);
        chunk.copy_from_slice(&mix(s).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
