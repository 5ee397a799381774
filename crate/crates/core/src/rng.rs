//! Seeded randomness.
//!
//! Every random draw in the crate comes from [`Xoshiro256PlusPlus`] seeded via
//! `seed_from_u64` (SplitMix64 state expansion). Independent streams are
//! derived with [`derive_seed`]. Uniform `f32` values use the top 24 bits of
//! one `next_u64` call: `(x >> 40) as f32 * 2^-24`, which any language can
//! replicate bit-exactly.

use rand::RngCore;
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};

pub type Rng = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> Rng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Mix a base seed with a stream label into an independent seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut sm = SplitMix64::seed_from_u64(base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    sm.next_u64()
}

/// Uniform in `[0, 1)` with 24 bits of resolution.
pub fn uniform_f32(rng: &mut Rng) -> f32 {
    (rng.next_u64() >> 40) as f32 * (1.0 / 16_777_216.0)
}

/// Uniform in `[-bound, bound)`.
pub fn symmetric_f32(rng: &mut Rng, bound: f32) -> f32 {
    (2.0 * uniform_f32(rng) - 1.0) * bound
}
