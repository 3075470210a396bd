//! Named, reproducible random streams derived from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Seed of the stream `name` under `root`.
pub fn derive_seed(root: u64, name: &str) -> u64 {
    splitmix(splitmix(root) ^ fnv1a(name.as_bytes()))
}

/// Independent stream `name/index` under `root`; used for per-sample and
/// per-epoch draws so results do not depend on iteration order.
pub fn stream(root: u64, name: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(derive_seed(root, name) ^ splitmix(index)))
}

/// Stream keyed by an arbitrary string id, e.g. a sample id.
pub fn keyed_stream(root: u64, name: &str, key: &str) -> ChaCha8Rng {
    stream(root, name, fnv1a(key.as_bytes()))
}
