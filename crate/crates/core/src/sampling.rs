//! Deterministic sample generators: Halton points and seeded random draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// The `index`-th point of the `dim`-dimensional Halton sequence in [0,1)^dim.
/// Index 0 is skipped so that the origin never appears.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(
        dim <= PRIMES.len(),
        "Halton dimension capped at {}",
        PRIMES.len()
    );
    (0..dim)
        .map(|d| radical_inverse(index + 1, PRIMES[d] as u64))
        .collect()
}

/// Seeded generator used by every sampler so runs are reproducible.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform point in the box `[-half_width, half_width]^dim`.
pub fn box_point(rng: &mut impl Rng, dim: usize, half_width: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.gen_range(-half_width..=half_width))
        .collect()
}

/// A vector `s·(1, a·u)` with `u` uniform in the closed unit ball of the
/// spatial slots and `s` in `[0.5, 2]`: a sample of the future cone patch
/// of aperture `a` around `∂₀`.
pub fn cone_vector(rng: &mut impl Rng, dim: usize, aperture: f64) -> Vec<f64> {
    let n = dim - 1;
    let u = ball_point(rng, n);
    let s = rng.gen_range(0.5..=2.0);
    let mut v = Vec::with_capacity(dim);
    v.push(s);
    v.extend(u.iter().map(|ui| s * aperture * ui));
    v
}

/// Uniform point in the closed unit ball of R^n (rejection sampling).
pub fn ball_point(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    loop {
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        if p.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            return p;
        }
    }
}

/// Unit directions in R^n: the coordinate axes (both signs) followed by
/// `extra` Halton-generated directions.
pub fn sphere_directions(n: usize, extra: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = s;
            out.push(e);
        }
    }
    if n < 2 {
        return out;
    }
    let mut k = 0;
    while out.len() < 2 * n + extra {
        let h = halton(k, n);
        k += 1;
        let p: Vec<f64> = h.iter().map(|x| 2.0 * x - 1.0).collect();
        let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 1e-3 && r <= 1.0 {
            out.push(p.iter().map(|x| x / r).collect());
        }
    }
    out
}
