//! Seeded random streams.
//!
//! Every Monte Carlo work unit owns an independent ChaCha8 stream whose seed is
//! derived from `(master_seed, trial_index, stream_tag)` with a SplitMix64
//! finaliser chain:
//!
//! ```text
//! seed = mix(mix(mix(master_seed) ^ trial_index) ^ stream_tag)
//! ```
//!
//! Results therefore do not depend on the order in which trials execute, and
//! adding a stream tag (for example a new bound model) leaves every other
//! stream untouched.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream tag for the channel amplitudes of a trial.
pub const CHANNEL_STREAM: u64 = 0xC4A2_0000;
/// Stream tag for one-off scenario draws (fully-correlated signatures).
pub const SIGNATURE_STREAM: u64 = 0x5161_0000;
/// Base stream tag for per-model noise; the model's stable index is added.
pub const NOISE_STREAM_BASE: u64 = 0x0015_E000;

/// SplitMix64 finaliser.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master_seed: u64, trial_index: u64, stream_tag: u64) -> u64 {
    mix(mix(mix(master_seed) ^ trial_index) ^ stream_tag)
}

pub fn stream(master_seed: u64, trial_index: u64, stream_tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master_seed, trial_index, stream_tag))
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Circularly symmetric complex Gaussian sample with `E|z|^2 = power`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, power: f64) -> Complex64 {
    let scale = (0.5 * power).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(scale * re, scale * im)
}
