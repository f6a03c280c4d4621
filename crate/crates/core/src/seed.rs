//! Deterministic sub-seed derivation from one root seed.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `(tag, index)` under `root`. Distinct tags or indices give
/// statistically independent streams.
pub fn derive_seed(root: u64, tag: &str, index: u64) -> u64 {
    let mut h = splitmix64(root);
    for b in tag.bytes() {
        h = splitmix64(h ^ b as u64);
    }
    splitmix64(h ^ splitmix64(index))
}
