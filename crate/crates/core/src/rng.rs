//! Seed derivation. Every random stream in the simulator is a ChaCha8
//! generator keyed by a master seed mixed with a tuple of stream tags, so
//! results never depend on the order in which streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with a sequence of tags into a new 64-bit seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

/// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

// Stream tags.
pub(crate) const TAG_CLASS_MEANS: u64 = 1;
pub(crate) const TAG_GROUP_OFFSET: u64 = 2;
pub(crate) const TAG_CLIENT_SAMPLES: u64 = 3;
pub(crate) const TAG_TEST_SET: u64 = 4;
pub(crate) const TAG_SHUFFLE: u64 = 5;
pub(crate) const TAG_SELECTION: u64 = 6;
pub(crate) const TAG_MODEL_INIT: u64 = 7;
