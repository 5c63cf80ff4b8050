//! Numeric checks of the properties the algorithms rely on:
//! unbiasedness of the gradient estimate, FTRL stability, 2-competitive
//! λ tuning, and barrier properties. Each suite carries a deliberately broken
//! control that must fail.

use rand::Rng;
use serde::Serialize;

use crate::algorithms::{
    grad_estimator, sample_with_roots, tune_lambda_lipschitz, tune_lambda_smooth, Mode,
};
use crate::barrier::{lift_normal, minkowski, Barrier, NormalBarrier};
pub use crate::env::PropertyReport;
use crate::env::QuadLoss;
use crate::error::{BcoError, Result};
use crate::harness::Trace;
use crate::numerics::{
    dot, fd_gradient, fd_hessian, local_norm, norm2, rel_error, solve_spd, SpdRoots, SymMatrix,
};
use crate::rng::{seeded, unit_vector};

/// Per-coordinate comparison of the empirical mean of `ĝ` with the analytic
/// gradient of the smoothed loss.
#[derive(Clone, Debug, Serialize)]
pub struct UnbiasednessReport {
    pub samples: usize,
    pub oracle: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    /// `|mean_i − oracle_i| / SE_i` for `i < d`.
    pub z_scores: Vec<f64>,
    pub passed: bool,
}

/// Draws `n` exploration directions at a fixed `(ŷ, H)` and averages `ĝ`.
///
/// For a quadratic `f̃` the smoothed gradient in the first `d` coordinates
/// equals `∇f̃(ŷ)`, since the perturbation has mean zero and the Hessian is
/// constant. The last coordinate has no such guarantee and is skipped.
pub fn mc_unbiasedness(
    loss: &QuadLoss,
    lambda: f64,
    y: &[f64],
    h: &SymMatrix,
    n: usize,
    seed: u64,
) -> Result<UnbiasednessReport> {
    let d = y.len() - 1;
    let roots = SpdRoots::new(h)?;
    let mut rng = seeded(seed);
    let mut sum = vec![0.0; d + 1];
    let mut sum_sq = vec![0.0; d + 1];
    for _ in 0..n {
        let s = sample_with_roots(&roots, &mut rng);
        let off = roots.inv_sqrt.matvec(&s.u);
        let x: Vec<f64> = (0..d).map(|i| y[i] + off[i]).collect();
        let g = grad_estimator(d, loss.value(&x), lambda, &x, &roots.sqrt, &s.u);
        for i in 0..=d {
            sum[i] += g[i];
            sum_sq[i] += g[i] * g[i];
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let std_error: Vec<f64> = (0..=d)
        .map(|i| {
            let var = ((sum_sq[i] - nf * mean[i] * mean[i]) / (nf - 1.0)).max(0.0);
            (var / nf).sqrt()
        })
        .collect();
    let ybar = &y[..d];
    let oracle: Vec<f64> = loss
        .gradient(ybar)
        .iter()
        .zip(ybar)
        .map(|(g, yi)| g + lambda * yi)
        .collect();
    let z_scores: Vec<f64> = (0..d)
        .map(|i| {
            let diff = (mean[i] - oracle[i]).abs();
            if std_error[i] > 0.0 {
                diff / std_error[i]
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let passed = z_scores.iter().all(|&z| z <= 3.0);
    Ok(UnbiasednessReport {
        samples: n,
        oracle,
        mean,
        std_error,
        z_scores,
        passed,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub rounds: usize,
    pub max_norm: f64,
    /// Rounds (1-based) with `‖ŷ_t − ŷ_{t+1}‖_{H_t} > 1/2`.
    pub violations: Vec<usize>,
    /// Whether the bound is asserted: default constants with `T ≥ ρ`.
    pub asserted: bool,
    /// `"smooth"` (γ = β, p = 1/2) or `"lipschitz"` (γ = 4L, p = 1/3).
    pub instantiation: Option<String>,
}

impl StabilityReport {
    pub fn passed(&self) -> bool {
        !self.asserted || self.violations.is_empty()
    }
}

pub fn stability_audit(trace: &Trace) -> StabilityReport {
    let cfg = &trace.effective;
    let instantiation = match cfg.mode {
        Mode::Smooth => Some("smooth".to_string()),
        Mode::Lipschitz => Some("lipschitz".to_string()),
        _ => None,
    };
    let nu = trace
        .config
        .domain
        .build()
        .map(|d| Barrier::for_domain(d).nu())
        .unwrap_or(f64::NAN);
    let rho = match cfg.mode {
        Mode::Smooth => crate::algorithms::rho_smooth(nu),
        Mode::Lipschitz => {
            crate::algorithms::rho_lipschitz(nu, cfg.d, cfg.lipschitz.unwrap_or(0.0))
        }
        _ => f64::INFINITY,
    };
    let asserted =
        instantiation.is_some() && cfg.overrides.is_default() && cfg.horizon as f64 >= rho.ceil();
    let violations = trace
        .records
        .iter()
        .filter(|r| !(r.stability_norm <= 0.5))
        .map(|r| r.t)
        .collect();
    StabilityReport {
        rounds: trace.records.len(),
        max_norm: trace.max_stability(),
        violations,
        asserted,
        instantiation,
    }
}

/// The tuning objective `B` (smooth) or `B′` (Lipschitz).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TuningObjective {
    pub mode: Mode,
    pub d: usize,
    /// `β` for smooth, `L` for Lipschitz.
    pub param: f64,
    pub lambda0: f64,
    pub sigmas: Vec<f64>,
}

impl TuningObjective {
    fn coefficient(&self) -> f64 {
        let d = self.d as f64;
        match self.mode {
            Mode::Lipschitz => (d * (self.param + 1.0)).powf(2.0 / 3.0),
            _ => d * (self.param + 1.0).sqrt(),
        }
    }

    fn term(&self, total: f64) -> f64 {
        match self.mode {
            Mode::Lipschitz => self.coefficient() / total.cbrt(),
            _ => self.coefficient() / total.sqrt(),
        }
    }

    /// `B({λ}) = λ_{1:t} + Σ_τ c / (σ_{1:τ} + λ_{0:τ})^p`.
    pub fn value(&self, lambdas: &[f64]) -> f64 {
        let mut sig = 0.0;
        let mut lam = self.lambda0;
        let mut b = 0.0;
        for (s, l) in self.sigmas.iter().zip(lambdas) {
            sig += s;
            lam += l;
            b += l + self.term(sig + lam);
        }
        b
    }

    /// The sequence chosen by the adaptive tuning rule.
    pub fn adaptive(&self) -> Result<Vec<f64>> {
        let mut sig = 0.0;
        let mut lam = self.lambda0;
        let mut out = Vec::with_capacity(self.sigmas.len());
        for s in &self.sigmas {
            sig += s;
            let l = match self.mode {
                Mode::Lipschitz => tune_lambda_lipschitz(self.d, self.param, sig, lam)?,
                _ => tune_lambda_smooth(self.d, self.param, sig, lam)?,
            };
            lam += l;
            out.push(l);
        }
        Ok(out)
    }

    /// `c·t/λ₀^p + 1`: any λ with an entry at least this large has `B`
    /// above the all-zero value, so the grid never needs to go further.
    pub fn default_lambda_max(&self) -> f64 {
        self.sigmas.len() as f64 * self.term(self.lambda0) + 1.0
    }

    /// Exact minimum of `B` over `λ*_s ∈ {0, step, …, k·step}` with
    /// `k = ⌊λ_max/step⌋`, by dynamic programming over prefix sums.
    pub fn grid_min(&self, step: f64, lambda_max: f64) -> (f64, Vec<f64>) {
        let t = self.sigmas.len();
        let k = (lambda_max / step).floor() as usize;
        let width = t * k + 1;
        let mut sig_cum = Vec::with_capacity(t);
        let mut acc = 0.0;
        for s in &self.sigmas {
            acc += s;
            sig_cum.push(acc);
        }
        // value[j]: best Σ_{τ'≤τ} term with prefix sum Λ_τ = j·step.
        let mut value = vec![f64::INFINITY; width];
        let mut parent: Vec<Vec<usize>> = Vec::with_capacity(t);
        let mut prev = vec![f64::INFINITY; width];
        prev[0] = 0.0;
        for (tau, &sc) in sig_cum.iter().enumerate() {
            let reach = (tau + 1) * k;
            let mut arg = vec![0usize; width];
            // Sliding-window minimum of prev over [j − k, j].
            let mut window: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
            for j in 0..=reach {
                while let Some(&b) = window.back() {
                    if prev[b] >= prev[j] {
                        window.pop_back();
                    } else {
                        break;
                    }
                }
                window.push_back(j);
                while let Some(&f) = window.front() {
                    if f + k < j {
                        window.pop_front();
                    } else {
                        break;
                    }
                }
                let best = *window.front().expect("window holds j");
                arg[j] = best;
                value[j] = prev[best] + self.term(sc + self.lambda0 + j as f64 * step);
            }
            for v in value.iter_mut().skip(reach + 1) {
                *v = f64::INFINITY;
            }
            parent.push(arg);
            std::mem::swap(&mut prev, &mut value);
        }
        let (mut best_j, mut best) = (0, f64::INFINITY);
        for (j, v) in prev.iter().enumerate() {
            let total = v + j as f64 * step;
            if total < best {
                best = total;
                best_j = j;
            }
        }
        let mut lambdas = vec![0.0; t];
        let mut j = best_j;
        for tau in (0..t).rev() {
            let pj = parent[tau][j];
            lambdas[tau] = (j - pj) as f64 * step;
            j = pj;
        }
        (best, lambdas)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TuningReport {
    pub adaptive_value: f64,
    pub grid_value: f64,
    pub ratio: f64,
    pub step: f64,
    pub lambda_max: f64,
    /// `step·t / grid minimum`.
    pub slack: f64,
    /// `λ_max` exceeds the grid minimum, so truncation cannot bind.
    pub certificate: bool,
    /// `ratio ≤ 2(1 + slack)`.
    pub within_bound: bool,
}

/// Ratio of `B` at the adaptive λ to its grid minimum. The step is halved
/// while the grid slack exceeds 0.2.
pub fn tuning_competitiveness(obj: &TuningObjective, step: f64) -> Result<TuningReport> {
    if obj.sigmas.is_empty() || obj.sigmas.len() > 5 {
        return Err(BcoError::Config(
            "tuning oracle handles sequences of length 1 to 5".into(),
        ));
    }
    let adaptive = obj.adaptive()?;
    let adaptive_value = obj.value(&adaptive);
    let lambda_max = obj.default_lambda_max();
    let t = obj.sigmas.len() as f64;
    let mut step = step;
    loop {
        let (grid_value, _) = obj.grid_min(step, lambda_max);
        let slack = step * t / grid_value;
        if slack > 0.2 && step > 1e-6 {
            log::info!(
                "grid slack {slack:.3} too large; refining step to {}",
                step / 2.0
            );
            step /= 2.0;
            continue;
        }
        let ratio = adaptive_value / grid_value;
        return Ok(TuningReport {
            adaptive_value,
            grid_value,
            ratio,
            step,
            lambda_max,
            slack,
            certificate: lambda_max > grid_value,
            within_bound: ratio <= 2.0 * (1.0 + slack),
        });
    }
}

/// Pass counts for every barrier property, plus controls expected to fail.
#[derive(Clone, Debug, Serialize)]
pub struct BarrierReport {
    pub properties: Vec<PropertyReport>,
    pub controls: Vec<PropertyReport>,
}

impl BarrierReport {
    /// All properties hold and every control is caught.
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyReport::passed)
            && self.controls.iter().all(|c| c.failures > 0)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyReport> {
        self.properties
            .iter()
            .chain(&self.controls)
            .find(|p| p.property == name)
    }
}

fn report(name: &str) -> PropertyReport {
    PropertyReport {
        property: name.into(),
        trials: 0,
        failures: 0,
        worst_violation: f64::NEG_INFINITY,
    }
}

fn record(r: &mut PropertyReport, excess: f64) {
    r.trials += 1;
    if !(excess <= 0.0) {
        r.failures += 1;
    }
    if excess > r.worst_violation || excess.is_nan() {
        r.worst_violation = excess;
    }
}

/// Point on the segment from `x` toward the boundary along `dir` where the
/// membership slack equals `target`.
fn point_at_slack(b: &Barrier, x: &[f64], dir: &[f64], target: f64) -> Vec<f64> {
    let dom = b.domain();
    let exit = dom.ray_exit(x, dir);
    let at = |s: f64| -> Vec<f64> { x.iter().zip(dir).map(|(a, v)| a + s * v).collect() };
    let (mut lo, mut hi) = (0.0, exit);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dom.contains(&at(mid)).slack > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}

fn lift(x: &[f64], b: f64) -> Vec<f64> {
    let mut z: Vec<f64> = x.iter().map(|v| v * b).collect();
    z.push(b);
    z
}

/// The unparenthesized form `400ψ(x/b) − 2ν ln b`. It is not logarithmically
/// homogeneous of degree `800ν`, which makes it a control for the identities.
fn unparenthesized(nb: &NormalBarrier, z: &[f64]) -> Result<f64> {
    let d = nb.dim();
    let b = z[d];
    let x: Vec<f64> = z[..d].iter().map(|v| v / b).collect();
    Ok(400.0 * nb.base().value(&x)? - 2.0 * nb.base().nu() * b.ln())
}

/// Random checks of the self-concordance inequality, Dikin containment,
/// boundary blow-up, the shift-norm bound, the Minkowski bound, the normal
/// barrier identities and inequality, and finite-difference agreement.
pub fn barrier_property_suite(
    barrier: &Barrier,
    trials: usize,
    seed: u64,
) -> Result<BarrierReport> {
    let nb = lift_normal(barrier);
    let dom = barrier.domain();
    let d = barrier.dim();
    let nu = barrier.nu();
    let nu_bar = nb.nu_bar();
    let mut rng = seeded(seed);

    let mut scb = report("scb_inequality");
    let mut dikin = report("dikin_containment");
    let mut blowup = report("boundary_blowup");
    let mut shift = report("shift_norm_bound");
    let mut mink = report("minkowski_bound");
    let mut hom1 = report("normal_hessian_z_eq_minus_grad");
    let mut hom2 = report("normal_ztHz_eq_nu_bar");
    let mut hom4 = report("normal_grad_dual_norm_eq_nu_bar");
    let mut hom3 = report("normal_lower_bound");
    let mut fd_psi = report("fd_agreement_psi");
    let mut fd_big = report("fd_agreement_lifted");

    let mut ctrl_scb = report("control_scb_small_nu");
    let mut ctrl_hom = report("control_unparenthesized_lift");
    let small = barrier.with_declared_nu(nu / 10.0);

    for _ in 0..trials {
        let x = dom.sample_interior(&mut rng, 0.98);
        let e = barrier.oracle(&x)?;
        let h = unit_vector(&mut rng, d);
        let hh = e.hess.quad_form(&h);
        let gh = dot(&e.grad, &h);
        record(&mut scb, gh * gh - nu * hh * (1.0 + 1e-8));
        record(&mut ctrl_scb, gh * gh - small.nu() * hh);

        // Dikin ellipsoid of radius 0.999.
        let dir = unit_vector(&mut rng, d);
        let len = 0.999 / e.hess.quad_form(&dir).sqrt();
        let y: Vec<f64> = x.iter().zip(&dir).map(|(a, v)| a + len * v).collect();
        record(&mut dikin, if dom.contains(&y).inside { -1.0 } else { 1.0 });

        let near = point_at_slack(barrier, &x, &dir, 1e-9);
        let far = point_at_slack(barrier, &x, &dir, 1e-2);
        let gap = barrier.value(&near)? - barrier.value(&far)?;
        record(&mut blowup, 10.0 - gap);

        // Shift-norm bound at x′ = x + r·δ, ‖δ‖_x = 1, r < 1.
        let r: f64 = rng.gen_range(0.0..0.95);
        let delta = unit_vector(&mut rng, d);
        let dn = e.hess.quad_form(&delta).sqrt();
        let xp: Vec<f64> = x.iter().zip(&delta).map(|(a, v)| a + r * v / dn).collect();
        let ep = barrier.oracle(&xp)?;
        let h2 = unit_vector(&mut rng, d);
        let lhs = ep.hess.quad_form(&h2).sqrt();
        let rhs = e.hess.quad_form(&h2).sqrt() * (1.0 - r);
        record(&mut shift, rhs - lhs - 1e-6 * rhs.abs());

        // Minkowski bound on the slice b = 1.
        let yy = dom.sample_interior(&mut rng, 0.98);
        let pi = minkowski(dom, &x, &yy)?;
        let diff = nb.value(&lift(&yy, 1.0))? - nb.value(&lift(&x, 1.0))?;
        record(&mut mink, diff - nu_bar * (1.0 / (1.0 - pi)).ln() - 1e-6);

        // Normal-barrier identities at a random lifted point.
        let b: f64 = rng.gen_range(0.3..3.0);
        let z = lift(&x, b);
        let ez = nb.oracle(&z)?;
        let hz = ez.hess.matvec(&z);
        let neg: Vec<f64> = ez.grad.iter().map(|g| -g).collect();
        record(&mut hom1, rel_error(&neg, &hz, 1e-300) - 1e-8);
        record(&mut hom2, (dot(&z, &hz) / nu_bar - 1.0).abs() - 1e-8);
        let dual = local_norm(&ez.grad, &ez.hess, true)?;
        record(&mut hom4, (dual * dual / nu_bar - 1.0).abs() - 1e-8);

        let b2: f64 = rng.gen_range(0.3..3.0);
        let w = lift(&yy, b2);
        let inner = -dot(&ez.grad, &w) / nu_bar;
        let bound = ez.value - nu_bar * inner.ln();
        record(
            &mut hom3,
            bound - nb.value(&w)? - 1e-6 * bound.abs().max(1.0),
        );

        let fh = fd_hessian(|p| unparenthesized(&nb, p), &z, 1e-5 * (1.0 + norm2(&z)))?;
        let zhz = fh.quad_form(&z);
        record(&mut ctrl_hom, (zhz / nu_bar - 1.0).abs() - 1e-4);

        // Finite differences.
        let step = 1e-5 * (1.0 + norm2(&x));
        let g_fd = fd_gradient(|p| barrier.value(p), &x, step)?;
        let h_fd = fd_hessian(|p| barrier.value(p), &x, step.sqrt() * 1e-2)?;
        let err = rel_error(&e.grad, &g_fd, 1e-8).max(rel_error(
            e.hess.as_slice(),
            h_fd.as_slice(),
            1e-8,
        ));
        record(&mut fd_psi, err - 1e-4);
        let zstep = 1e-5 * (1.0 + norm2(&z));
        let g_fd = fd_gradient(|p| nb.value(p), &z, zstep)?;
        let h_fd = fd_hessian(|p| nb.value(p), &z, zstep.sqrt() * 1e-2)?;
        let err = rel_error(&ez.grad, &g_fd, 1e-8).max(rel_error(
            ez.hess.as_slice(),
            h_fd.as_slice(),
            1e-8,
        ));
        record(&mut fd_big, err - 1e-4);
    }
    Ok(BarrierReport {
        properties: vec![
            scb, dikin, blowup, shift, mink, hom1, hom2, hom4, hom3, fd_psi, fd_big,
        ],
        controls: vec![ctrl_scb, ctrl_hom],
    })
}

/// `H⁻¹ e_{d+1}` normalized, used when replaying a single round offline.
pub fn exploration_axis(h: &SymMatrix) -> Result<Vec<f64>> {
    let n = h.order();
    let mut e = vec![0.0; n];
    e[n - 1] = 1.0;
    let v = solve_spd(h, &e)?;
    let s = norm2(&v);
    Ok(v.into_iter().map(|x| x / s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::{ball_barrier, Domain};
    use crate::ftrl::compute_h;

    #[test]
    fn unbiasedness_linear_and_constant() {
        let nb = lift_normal(&ball_barrier(2, 1.0).unwrap());
        let y = vec![0.2, -0.1, 1.0];
        let h = compute_h(&nb, &y, 0.01, 50.0).unwrap();
        let linear = QuadLoss {
            q_mat: SymMatrix::zeros(2),
            q: vec![1.0, 0.0],
            k: 0.0,
        };
        let rep = mc_unbiasedness(&linear, 0.0, &y, &h, 50_000, 1).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert_eq!(rep.oracle, vec![1.0, 0.0]);
        let constant = QuadLoss {
            q_mat: SymMatrix::zeros(2),
            q: vec![0.0, 0.0],
            k: 0.3,
        };
        let rep = mc_unbiasedness(&constant, 0.0, &y, &h, 20_000, 2).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert_eq!(rep.oracle, vec![0.0, 0.0]);
    }

    #[test]
    fn grid_dp_matches_exhaustive_search() {
        let obj = TuningObjective {
            mode: Mode::Smooth,
            d: 1,
            param: 0.5,
            lambda0: 2.0,
            sigmas: vec![0.3, 0.0, 0.8],
        };
        let step = 0.05;
        let lmax = obj.default_lambda_max();
        let k = (lmax / step).floor() as usize;
        let mut best = f64::INFINITY;
        for a in 0..=k {
            for b in 0..=k {
                for c in 0..=k {
                    let v = obj.value(&[a as f64 * step, b as f64 * step, c as f64 * step]);
                    best = best.min(v);
                }
            }
        }
        let (dp, lam) = obj.grid_min(step, lmax);
        assert!((dp - best).abs() < 1e-12);
        assert!((obj.value(&lam) - dp).abs() < 1e-12);
    }

    #[test]
    fn single_round_tuning_ratio() {
        let obj = TuningObjective {
            mode: Mode::Smooth,
            d: 1,
            param: 0.0,
            lambda0: 1.0,
            sigmas: vec![0.0],
        };
        let rep = tuning_competitiveness(&obj, obj.default_lambda_max() / 1e4).unwrap();
        assert!(rep.ratio <= 2.0 && rep.certificate, "{rep:?}");
    }

    #[test]
    fn large_lambda0_ratio_tends_to_two() {
        // Balanced λ̂ doubles the bias term while the optimum takes λ* = 0.
        for mode in [Mode::Smooth, Mode::Lipschitz] {
            let obj = TuningObjective {
                mode,
                d: 1,
                param: 0.0,
                lambda0: 1e8,
                sigmas: vec![0.2, 0.5],
            };
            let rep = tuning_competitiveness(&obj, 1e-7).unwrap();
            assert!(
                (rep.ratio - 2.0).abs() < 0.01 && rep.within_bound,
                "{rep:?}"
            );
        }
    }

    #[test]
    fn barrier_suite_passes_with_controls_caught() {
        for bar in [
            ball_barrier(2, 1.0).unwrap(),
            Barrier::for_domain(Domain::unit_box(2).unwrap()),
        ] {
            let rep = barrier_property_suite(&bar, 60, 3).unwrap();
            assert!(rep.passed(), "{rep:#?}");
        }
    }

    #[test]
    fn ball_centre_sanity() {
        let bar = ball_barrier(2, 1.0).unwrap();
        let e = bar.oracle(&[0.0, 0.0]).unwrap();
        assert_eq!(e.hess, SymMatrix::identity(2).scaled(2.0));
        assert_eq!(
            exploration_axis(&SymMatrix::identity(3)).unwrap(),
            vec![0.0, 0.0, 1.0]
        );
    }
}
