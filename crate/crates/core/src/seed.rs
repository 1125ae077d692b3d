//! Deterministic seed derivation and the hash family used by local hashing.
//!
//! Every random choice in the crate flows from a single 64-bit experiment
//! seed through [`derive_seed`], so runs are bit-reproducible across
//! platforms. The mixer is SplitMix64, which is cheap, well distributed, and
//! has a fixed published definition.

use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer (Steele, Lea, Flood / Vigna).
#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Fold a list of parts into one substream seed.
///
/// Used as `derive_seed(&[experiment_seed, stream_tag, index, ...])`; any
/// change in any part changes the result.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut acc = 0x243F_6A88_85A3_08D3; // arbitrary nonzero start
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    acc
}

/// Seeded counter-mode RNG for one substream.
pub fn stream_rng(parts: &[u64]) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(derive_seed(parts))
}

/// Per-user hash-function seed: experiment (or approach) seed XOR user index.
#[inline]
pub fn user_hash_seed(seed: u64, user: usize) -> u64 {
    seed ^ user as u64
}

/// The seeded hash family behind local hashing: maps `value` into
/// `[1, domain]` under the function identified by `hash_seed`.
///
/// Defined as `1 + splitmix64(hash_seed XOR value * GOLDEN) mod domain` where
/// GOLDEN is the 64-bit golden-ratio constant. Two users with the same
/// `hash_seed` hash identically.
#[inline]
pub fn seeded_hash(hash_seed: u64, value: u64, domain: u32) -> u32 {
    debug_assert!(domain >= 1);
    1 + (splitmix64(hash_seed ^ value.wrapping_mul(0x9E37_79B9_7F4A_7C15)) % domain as u64) as u32
}

/// Fold a composite value (e.g. a multi-attribute interval index) into one
/// 64-bit key so it can be fed to [`seeded_hash`].
#[inline]
pub fn fold_key(parts: &[u64]) -> u64 {
    let mut acc = 0x4528_21E6_38D0_1377;
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_order_sensitive() {
        assert_ne!(derive_seed(&[1, 2]), derive_seed(&[2, 1]));
        assert_ne!(derive_seed(&[1]), derive_seed(&[1, 0]));
        assert_eq!(derive_seed(&[7, 9]), derive_seed(&[7, 9]));
    }

    #[test]
    fn seeded_hash_is_deterministic_and_in_range() {
        for seed in [0u64, 1, 0xDEAD_BEEF] {
            for v in 1..=64u64 {
                let h = seeded_hash(seed, v, 4);
                assert!((1..=4).contains(&h));
                assert_eq!(h, seeded_hash(seed, v, 4));
            }
        }
    }

    #[test]
    fn hash_spreads_over_domain() {
        let mut counts = [0usize; 4];
        for v in 0..4000u64 {
            counts[(seeded_hash(99, v, 4) - 1) as usize] += 1;
        }
        for &cnt in &counts {
            assert!((800..1200).contains(&cnt), "skewed hash: {counts:?}");
        }
    }
}
