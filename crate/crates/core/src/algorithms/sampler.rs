//! Exploration on the orthogonal slice and the one-point gradient estimator.

use rand::Rng;

use crate::error::Result;
use crate::numerics::{dot, norm2, SpdRoots, SymMatrix};

/// A draw `u` together with the direction `w = H^{−1/2}e_{d+1}/‖·‖` it is
/// orthogonal to.
#[derive(Clone, Debug)]
pub struct SliceSample {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
}

/// Uniform `u` on `S^{d+1} ∩ w^⊥`, given precomputed roots of `H`.
///
/// A Householder reflection `Q` with `Q e_{d+1} = −w` maps the first `d`
/// axes onto an orthonormal basis of `w^⊥`; `u = Q (v, 0)` with `v` uniform
/// on the `d`-sphere.
pub fn sample_with_roots(roots: &SpdRoots, rng: &mut impl Rng) -> SliceSample {
    let n = roots.inv_sqrt.order();
    let d = n - 1;
    let col = roots.inv_sqrt.column(d);
    let norm = norm2(&col);
    let w: Vec<f64> = col.iter().map(|c| c / norm).collect();
    // w_{d+1} = (H^{-1/2})_{d+1,d+1}/‖·‖ > 0, so e_{d+1} + w does not cancel.
    let mut v = w.clone();
    v[d] += 1.0;
    let vv = dot(&v, &v);

    let mut base = crate::rng::unit_vector(rng, d);
    base.push(0.0);
    let coef = 2.0 * dot(&v, &base) / vv;
    let u = base.iter().zip(&v).map(|(b, vi)| b - coef * vi).collect();
    SliceSample { u, w }
}

pub fn sample_orthosphere(h: &SymMatrix, rng: &mut impl Rng) -> Result<SliceSample> {
    Ok(sample_with_roots(&SpdRoots::new(h)?, rng))
}

/// `ĝ = d (f + (λ/2)‖x‖²) H^{1/2} u`.
pub fn grad_estimator(
    d: usize,
    f_val: f64,
    lambda: f64,
    x: &[f64],
    h_sqrt: &SymMatrix,
    u: &[f64],
) -> Vec<f64> {
    let scale = d as f64 * (f_val + 0.5 * lambda * dot(x, x));
    h_sqrt.matvec(u).into_iter().map(|v| scale * v).collect()
}
