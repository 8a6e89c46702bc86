//! Seeded random streams.
//!
//! Every stochastic component owns its own stream derived from a run seed and
//! a stream label, so results do not depend on call interleaving between
//! components or on worker scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Derives an independent stream from `seed` and a label.
pub fn stream(seed: u64, label: &str) -> SimRng {
    // FNV-1a over the label, mixed with the seed through splitmix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    SimRng::seed_from_u64(splitmix64(seed ^ h))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, "input").random();
        let b: u64 = stream(7, "input").random();
        let c: u64 = stream(7, "recurrent").random();
        let d: u64 = stream(8, "input").random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
