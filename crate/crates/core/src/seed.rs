//! Named, independent random sub-streams derived from a single run seed.
//!
//! Every consumer of randomness (environment noise, exploration, developer
//! responses) draws from its own stream so that disabling one component
//! never shifts the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const ENV_STREAM: &str = "env";
pub const EXPLORATION_STREAM: &str = "exploration";
pub const DEVELOPER_STREAM: &str = "developer-response";
pub const AMBIENT_STREAM: &str = "ambient";

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// Seed of the named sub-stream of `seed`.
pub fn substream(seed: u64, name: &str) -> u64 {
    splitmix64(seed ^ fnv1a64(name.as_bytes()))
}

/// Uniform draw in `[0, 1)` at position `index` of a stream.
pub fn unit_draw(stream: u64, index: u64) -> f64 {
    (splitmix64(stream.wrapping_add(index)) >> 11) as f64 / (1u64 << 53) as f64
}

pub fn rng(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream(seed, name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_matches_reference_vector() {
        // First outputs of the reference SplitMix64 generator seeded with 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn streams_are_distinct() {
        assert_ne!(substream(7, ENV_STREAM), substream(7, DEVELOPER_STREAM));
        assert_ne!(substream(7, ENV_STREAM), substream(8, ENV_STREAM));
    }

    #[test]
    fn unit_draw_is_in_range() {
        for i in 0..1000 {
            let u = unit_draw(42, i);
            assert!((0.0..1.0).contains(&u));
        }
    }
}
