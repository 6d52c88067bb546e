//! Seed fan-out.
//!
//! Every random quantity is drawn from a stream keyed by the master seed and a
//! tag path, so results never depend on iteration order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream tags used across the crate.
pub mod tag {
    pub const GENERATE: u64 = 1;
    pub const PSI: u64 = 2;
    pub const SPECTRAL: u64 = 3;
    pub const BOOTSTRAP: u64 = 4;
    pub const AUGMENT: u64 = 5;
    pub const REPLICATE: u64 = 6;
    pub const KMEANS: u64 = 7;
    pub const LANCZOS: u64 = 8;
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a tag path.
pub fn derive(master: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(master ^ GOLDEN), |h, &t| {
        mix(h ^ mix(t.wrapping_add(GOLDEN)))
    })
}

/// Uniform draw in `[0, 1)` for the unordered pair `{i, j}` under `key`.
/// Symmetric in `i` and `j`.
#[inline]
pub fn pair_uniform(key: u64, i: usize, j: usize) -> f64 {
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    let code = ((hi as u64) << 32) ^ (lo as u64);
    let bits = mix(mix(key ^ code.wrapping_mul(GOLDEN)).wrapping_add(key));
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A ChaCha8 stream for the given seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
