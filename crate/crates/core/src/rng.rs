//! Reproducible random streams.
//!
//! Every stream is a ChaCha8 generator whose key is built from a 64-bit seed
//! and a purpose tag, and whose stream id (nonce) encodes a mode index pair.
//! Draws for mode `(i, j)` therefore depend only on `(seed, purpose, i, j)`,
//! never on how many other modes are sampled or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    /// Brownian increments of the Q-Wiener process.
    Increment = 1,
    /// Independent complement of the exact stochastic convolution.
    Residual = 2,
    /// Standalone draws of the exact Ornstein–Uhlenbeck recurrence.
    OuExact = 3,
    /// Test and configuration randomness.
    Auxiliary = 4,
}

/// Splitmix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of Monte Carlo sample `sample` under `master_seed`.
pub fn sample_seed(master_seed: u64, sample: u64) -> u64 {
    mix64(mix64(master_seed) ^ mix64(sample.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Stream for mode `(i, j)` under `seed` and `purpose`.
pub fn mode_stream(seed: u64, purpose: Purpose, i: usize, j: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    key[16..24].copy_from_slice(&mix64(seed ^ purpose as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(((i as u64) << 32) | (j as u64 & 0xFFFF_FFFF));
    rng
}
