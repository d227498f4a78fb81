//! Seed derivation for independent, reproducible RNG streams.

/// SplitMix64 finalizer applied to `(master, index)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a labelled sub-stream, e.g. `derive_labeled(seed, "videos", 3)`.
pub fn derive_labeled(master: u64, label: &str, index: u64) -> u64 {
    let label_hash = label
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3));
    derive_seed(derive_seed(master, label_hash), index)
}
