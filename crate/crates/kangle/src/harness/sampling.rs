//! Halton points in a box, optionally shifted by a seeded random rotation.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Radical inverse of `i` in base `b`.
pub fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    r
}

/// `count` Halton points in the unit cube of dimension `dim <= 8`, starting
/// at index 1. Seed 0 gives the plain sequence; any other seed applies a
/// Cranley-Patterson rotation drawn from that seed.
pub fn halton(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(
        dim <= PRIMES.len(),
        "Halton dimension {dim} exceeds {}",
        PRIMES.len()
    );
    let shift: Vec<f64> = if seed == 0 {
        vec![0.0; dim]
    } else {
        let mut rng = StdRng::seed_from_u64(seed);
        (0..dim).map(|_| rng.gen::<f64>()).collect()
    };
    (1..=count as u64)
        .map(|i| {
            (0..dim)
                .map(|k| {
                    let x = radical_inverse(i, PRIMES[k]) + shift[k];
                    x - x.floor()
                })
                .collect()
        })
        .collect()
}

/// Halton points mapped affinely into `domain`.
pub fn halton_box(domain: &[(f64, f64)], count: usize, seed: u64) -> Vec<Vec<f64>> {
    halton(domain.len(), count, seed)
        .into_iter()
        .map(|p| {
            p.iter()
                .zip(domain)
                .map(|(t, (lo, hi))| lo + t * (hi - lo))
                .collect()
        })
        .collect()
}
