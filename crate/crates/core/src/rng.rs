//! Keyed RNG streams. Every random choice in a run draws from a stream
//! derived from an explicit key, never from shared sequential state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Mixes a base seed with numeric tags.
pub fn mix(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, t| splitmix64(acc ^ splitmix64(*t)))
}

/// Mixes a base seed with string labels (e.g. variant and activation names).
pub fn mix_labels(seed: u64, labels: &[&str]) -> u64 {
    let tags: Vec<u64> = labels.iter().map(|l| fnv1a(l.as_bytes())).collect();
    mix(seed, &tags)
}

pub fn stream(seed: u64, tags: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(mix(seed, tags))
}
