//! Labelled random substreams derived from one master seed.
//!
//! Each consumer (a cell's measurement noise, a cell's parameter draw, ...)
//! gets its own ChaCha stream keyed by `(master, label, index)`, so adding a
//! new consumer never shifts the numbers seen by an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn substream(master: u64, label: &str, index: usize) -> ChaCha8Rng {
    let seed = splitmix64(splitmix64(master ^ fnv1a(label)) ^ (index as u64));
    ChaCha8Rng::seed_from_u64(seed)
}
