//! Seeded random streams. One ChaCha8 stream per run; Gaussians by Box–Muller.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> RunRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal pair from two uniforms.
pub fn gaussian_pair(rng: &mut impl Rng) -> (f64, f64) {
    // 1 - U keeps the logarithm argument in (0, 1].
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let th = std::f64::consts::TAU * u2;
    (r * th.cos(), r * th.sin())
}

pub fn gaussian_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        let (a, b) = gaussian_pair(rng);
        out.push(a);
        out.push(b);
    }
    out.truncate(n);
    out
}

/// Uniform point on the unit sphere in `ℝⁿ`.
pub fn unit_vector(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let g = gaussian_vec(rng, n);
        let norm = crate::numerics::norm2(&g);
        if norm > 1e-300 {
            return g.into_iter().map(|v| v / norm).collect();
        }
    }
}
