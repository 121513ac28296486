//! Seeding and random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] stream. Child
//! seeds are derived as the first eight bytes (little endian) of
//! `SHA-256(master_le ‖ len(label)_le ‖ label ‖ index_0_le ‖ …)`, so a stream
//! depends only on its master seed, a component label and its indices, never
//! on scheduling order or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::scalar::Real;

pub type Stream = ChaCha8Rng;

/// Stable 64-bit child seed for `(master, label, indices)`.
pub fn derive_seed(master: u64, label: &str, indices: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    for i in indices {
        hasher.update(i.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream for a labelled child of `master`.
pub fn child_stream(master: u64, label: &str, indices: &[u64]) -> Stream {
    stream(derive_seed(master, label, indices))
}

/// Uniform draw on `[-half_width, half_width)`.
pub fn symmetric<T: Real, R: Rng + ?Sized>(rng: &mut R, half_width: T) -> T {
    let u: f64 = rng.random();
    T::of(2.0 * u - 1.0) * half_width
}

/// Uniform draw on `[0, 1)`.
pub fn unit<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::of(rng.random::<f64>())
}

/// Standard normal draw (Box-Muller, one value per call).
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
