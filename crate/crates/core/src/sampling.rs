//! Deterministic low-discrepancy sampling of axis-aligned boxes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut inv = 1.0 / b;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base as u64) as f64 * inv;
        i /= base as u64;
        inv /= b;
    }
    out
}

/// Halton points in `[lower, upper]`, starting at index 1. A nonzero
/// `seed` applies a Cranley–Patterson rotation, so different seeds give
/// different but equally uniform point sets.
pub fn halton_box(lower: &[f64], upper: &[f64], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = lower.len();
    assert!(d <= PRIMES.len(), "Halton sampling supports up to {} dimensions", PRIMES.len());
    let shift: Vec<f64> = if seed == 0 {
        vec![0.0; d]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..d).map(|_| rng.gen::<f64>()).collect()
    };
    (1..=count as u64)
        .map(|i| {
            (0..d)
                .map(|k| {
                    let u = (radical_inverse(i, PRIMES[k]) + shift[k]).fract();
                    lower[k] + u * (upper[k] - lower[k])
                })
                .collect()
        })
        .collect()
}
