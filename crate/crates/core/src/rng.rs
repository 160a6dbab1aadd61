//! Deterministic RNG streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose seed is a
//! mix of the master seed, a purpose tag, and up to two integer coordinates
//! (worker, epoch, ...). Streams with different tags never overlap, so the
//! problem draw does not depend on how many shuffles an optimizer performed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags for [`stream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    Problem = 0x5052_4f42,
    Shuffle = 0x5348_5546,
    Sample = 0x5341_4d50,
    Smoothness = 0x534d_4f4f,
    MonteCarlo = 0x4d4f_4e54,
    Init = 0x494e_4954,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the 64-bit seed for `(master, tag, a, b)`.
pub fn derive_seed(master: u64, tag: StreamTag, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ tag as u64);
    h = splitmix64(h ^ a);
    splitmix64(h ^ b.rotate_left(32))
}

pub fn stream(master: u64, tag: StreamTag, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag, a, b))
}
