//! Deterministic random-variate helpers.
//!
//! All stochastic code in this crate draws through these helpers (or through
//! `rand_distr` samplers) from a caller-seeded generator, so results are
//! bit-reproducible for a given seed on every platform.

use rand::RngCore;

/// Uniform draw in the open-closed interval `(0, 1]`.
///
/// Uses the top 53 bits of a `u64`, shifted away from zero so the logarithm
/// in [`exponential`] is always finite.
pub fn uniform_open01(rng: &mut impl RngCore) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    if u == 0.0 { f64::MIN_POSITIVE } else { u }
}

/// Exponential variate with the given rate, via the inverse CDF.
pub fn exponential(rng: &mut impl RngCore, rate: f64) -> f64 {
    -uniform_open01(rng).ln() / rate
}

/// Derive an independent stream seed from a base seed and a stream index.
///
/// SplitMix64 finalizer over `base ^ (index * golden gamma)`; adjacent
/// indices map to uncorrelated seeds.
pub fn substream_seed(base: u64, index: u64) -> u64 {
    const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut z = base ^ index.wrapping_mul(GOLDEN_GAMMA);
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
