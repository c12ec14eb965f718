//! Deterministic RNG stream derivation.
//!
//! Every random draw in the project comes from a stream derived as
//! `(root seed, purpose label, index)`. Streams are stateless: the noise for
//! optimisation step `k` depends only on those three values, never on how many
//! draws happened before. That is what makes interrupted-and-resumed training
//! bit-identical to an uninterrupted run.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::Scalar;

/// FNV-1a hash of a label, used to separate purpose streams.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derives the RNG for (`seed`, `label`, `index`).
///
/// Typical labels: `"dataset"`, `"init"`, `"train-noise"`, `"train-order"`.
/// `index` is a step or sample counter; pass 0 for one-shot streams.
pub fn derive_rng(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    const DOMAIN: u64 = 0x6364612d726e6731; // "cda-rng1"
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&label_hash(label).to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..32].copy_from_slice(&DOMAIN.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Standard normal draw, always sampled at `f64` precision and then converted,
/// so a given stream yields the same sequence in `f32` and `f64` models.
pub fn next_standard_normal<T: Scalar>(rng: &mut ChaCha8Rng) -> T {
    // Box-Muller on two uniform draws; keeps the dependency surface small and
    // the draw order obvious.
    loop {
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        if u1 > f64::MIN_POSITIVE {
            let r = (-2.0 * u1.ln()).sqrt();
            return T::of_f64(r * (2.0 * std::f64::consts::PI * u2).cos());
        }
    }
}

/// Uniform draw in `[lo, hi)`, sampled at `f64` precision.
pub fn next_uniform<T: Scalar>(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> T {
    T::of_f64(lo + (hi - lo) * rng.gen::<f64>())
}
