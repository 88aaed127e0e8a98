//! Deterministic seed derivation and RNG construction.
//!
//! All randomness in the toolkit flows from a caller-supplied master seed.
//! Subsystems derive independent streams by mixing fixed tags into the master
//! seed with SplitMix64, so results are byte-identical across runs, worker
//! counts, and evaluation orders.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// One SplitMix64 step.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and a sequence of tags.
pub fn derive(base: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(base);
    for &t in tags {
        s = splitmix64(s ^ splitmix64(t));
    }
    s
}

/// Deterministic RNG for a derived stream.
pub fn rng(base: u64, tags: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive(base, tags))
}

/// Stable tag for a string label (FNV-1a).
pub fn tag(label: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}
