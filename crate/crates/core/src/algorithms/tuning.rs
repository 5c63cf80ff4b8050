//! Default constants, `λ_t` tuning equations and learning-rate schedules.

use crate::error::{BcoError, Result};
use crate::numerics::bisect_root;

/// `ρ = 512 ν (1 + 32√ν)²`.
pub fn rho_smooth(nu: f64) -> f64 {
    512.0 * nu * (1.0 + 32.0 * nu.sqrt()).powi(2)
}

/// `ρ′ = 2¹⁶ (16√ν d^{1/3} (4L+1)^{1/3} + (L+1)^{2/3})³ / d`.
pub fn rho_lipschitz(nu: f64, d: usize, l: f64) -> f64 {
    let d = d as f64;
    let inner = 16.0 * nu.sqrt() * d.cbrt() * (4.0 * l + 1.0).cbrt() + (l + 1.0).powf(2.0 / 3.0);
    65536.0 * inner.powi(3) / d
}

/// `(1/2d) √((β+1)/(σ_{1:t}+λ_{0:t}) + ν/(T ln T))`.
pub fn eta_smooth(d: usize, beta: f64, nu: f64, horizon: usize, curvature_sum: f64) -> f64 {
    let t = horizon as f64;
    ((beta + 1.0) / curvature_sum + nu / (t * t.ln())).sqrt() / (2.0 * d as f64)
}

/// `d^{−4/3} (L+1)^{2/3} (1/(σ_{1:t}+λ_{0:t}) + 1/T)^{1/3}`.
pub fn eta_lipschitz(d: usize, l: f64, horizon: usize, curvature_sum: f64) -> f64 {
    let d = d as f64;
    d.powf(-4.0 / 3.0)
        * (l + 1.0).powf(2.0 / 3.0)
        * (1.0 / curvature_sum + 1.0 / horizon as f64).cbrt()
}

fn tune(mut residual: impl FnMut(f64) -> f64, what: &str) -> Result<f64> {
    let lambda = bisect_root(&mut residual, 0.0, 1.0, 0.0).map_err(|e| match e {
        BcoError::Bracketing { f_lo, f_hi } => BcoError::Config(format!(
            "{what} tuning equation has no root in (0, 1) (residuals {f_lo:e}, {f_hi:e}); λ₀ is too small"
        )),
        other => other,
    })?;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(BcoError::Config(format!(
            "{what} tuning returned λ = {lambda} outside (0, 1)"
        )));
    }
    Ok(lambda)
}

/// Root of `λ √(σ_{1:t} + λ_{0:t−1} + λ) = d √(β+1)`.
pub fn tune_lambda_smooth(
    d: usize,
    beta: f64,
    sigma_cum: f64,
    lambda_cum_prev: f64,
) -> Result<f64> {
    let a = sigma_cum + lambda_cum_prev;
    let target = d as f64 * (beta + 1.0).sqrt();
    tune(|l| l * (a + l).sqrt() - target, "smooth")
}

/// Root of `λ (σ_{1:t} + λ_{0:t−1} + λ)^{1/3} = d^{2/3} (L+1)^{2/3}`.
pub fn tune_lambda_lipschitz(
    d: usize,
    l: f64,
    sigma_cum: f64,
    lambda_cum_prev: f64,
) -> Result<f64> {
    let a = sigma_cum + lambda_cum_prev;
    let target = ((d as f64) * (l + 1.0)).powf(2.0 / 3.0);
    tune(|x| x * (a + x).cbrt() - target, "lipschitz")
}

/// Residual of the smooth tuning equation, in the form `λ √(Σ) − d√(β+1)`.
pub fn residual_smooth(d: usize, beta: f64, curvature_sum: f64, lambda: f64) -> f64 {
    lambda * curvature_sum.sqrt() - d as f64 * (beta + 1.0).sqrt()
}

/// Residual of the Lipschitz tuning equation, `λ Σ^{1/3} − d^{2/3}(L+1)^{2/3}`.
pub fn residual_lipschitz(d: usize, l: f64, curvature_sum: f64, lambda: f64) -> f64 {
    lambda * curvature_sum.cbrt() - ((d as f64) * (l + 1.0)).powf(2.0 / 3.0)
}

/// Positive root of `(3/2)λ² + (3/2)λ·A − 1 = 0` with `A = σ_{1:t} + λ_{1:t−1}`.
pub fn aogd_lambda(sigma_cum: f64, lambda_cum_prev: f64) -> f64 {
    let a = sigma_cum + lambda_cum_prev;
    let disc = (a * a + 8.0 / 3.0).sqrt();
    // Rationalized form avoids cancellation when A is large.
    (8.0 / 3.0) / (2.0 * (a + disc))
}
