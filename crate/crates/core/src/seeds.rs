//! Keyed seed derivation.
//!
//! Every random stream in the crate is derived from one user seed by folding a
//! path of integer tags through SplitMix64:
//!
//! ```text
//! h0 = mix(base ^ 0x9E37_79B9_7F4A_7C15)
//! h_{k+1} = mix(h_k ^ mix(tag_k + k + 1))
//! ```
//!
//! where `mix` is the SplitMix64 finalizer. Streams are ChaCha8 generators
//! seeded with the final hash, so results never depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_TRAIN: u64 = 1;
pub const TAG_TEST: u64 = 2;
pub const TAG_TOKENS: u64 = 3;
pub const TAG_DIFFUSION: u64 = 4;
pub const TAG_PHASE: u64 = 5;
pub const TAG_SAMPLE_COMPLEXITY: u64 = 6;
pub const TAG_DENOISER: u64 = 7;
pub const TAG_AR: u64 = 8;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(base ^ 0x9E37_79B9_7F4A_7C15);
    for (k, &tag) in path.iter().enumerate() {
        h = splitmix64(h ^ splitmix64(tag.wrapping_add(k as u64 + 1)));
    }
    h
}

pub fn rng_for(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_path_sensitive() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
        assert_ne!(derive_seed(7, &[0]), derive_seed(7, &[0, 0]));
    }

    #[test]
    fn splitmix_reference_value() {
        // First output of the reference SplitMix64 generator seeded with 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }
}
