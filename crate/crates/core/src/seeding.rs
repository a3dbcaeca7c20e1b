//! Deterministic per-index seed derivation.
//!
//! `derive_seed(master, i)` is the SplitMix64 output function applied to
//! `master + (i + 1) * 0x9E3779B97F4A7C15` (wrapping arithmetic). Trial and
//! resample `i` seed a `ChaCha8Rng` with this value, which makes every run a
//! pure function of the master seed and independent of thread scheduling.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}
