//! Running FTRL statistics and the damped-Newton solver for the regularized
//! leader on the slice `b = 1` of the lifted domain.
//!
//! On the slice the objective is
//!
//! ```text
//! F(x) = Gᵀx̂ + ((S + λ₀)/2)‖x̂‖² − Pᵀx̂ + Ψ(x̂)/η,   x̂ = (x, 1)
//! ```
//!
//! which equals `Σ_s (ĝ_sᵀx̂ + (σ_s+λ_s)/2 ‖x̂ − ŷ_s‖²) + (λ₀/2)‖x̂‖² + Ψ(x̂)/η`
//! up to the constant `Σ_s (σ_s+λ_s)‖ŷ_s‖²/2`.

use crate::barrier::NormalBarrier;
use crate::error::{BcoError, Result};
use crate::numerics::{dot, Cholesky, SymMatrix};

pub const NEWTON_TOL: f64 = 1e-8;
pub const NEWTON_MAX_ITER: usize = 200;
const ARMIJO_C: f64 = 1e-4;
/// Below this Newton decrement the full step is taken subject only to
/// feasibility. The predicted decrease `λ²/2` is then far below the rounding
/// error of `F`, so an Armijo comparison would reject exact steps.
const QUADRATIC_REGION: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct FtrlState {
    pub t: usize,
    /// `Σ_{s≤t} ĝ_s`.
    pub g: Vec<f64>,
    /// `σ_{1:t} + λ_{1:t}`.
    pub s: f64,
    /// `Σ_{s≤t} (σ_s + λ_s) ŷ_s`.
    pub p: Vec<f64>,
    /// `Σ_{s≤t} (σ_s + λ_s) ‖ŷ_s‖² / 2`, the constant dropped from the objective.
    pub dropped_constant: f64,
    pub lambda0: f64,
    pub eta_next: f64,
    pub y_current: Vec<f64>,
    /// `σ_{1:t}`.
    pub sigma_sum: f64,
    /// `λ_{0:t}`.
    pub lambda_sum: f64,
}

impl FtrlState {
    pub fn new(y1: Vec<f64>, lambda0: f64, eta1: f64) -> Self {
        let n = y1.len();
        FtrlState {
            t: 0,
            g: vec![0.0; n],
            s: 0.0,
            p: vec![0.0; n],
            dropped_constant: 0.0,
            lambda0,
            eta_next: eta1,
            y_current: y1,
            sigma_sum: 0.0,
            lambda_sum: lambda0,
        }
    }

    /// `σ_{1:t} + λ_{0:t}`.
    pub fn curvature_sum(&self) -> f64 {
        self.sigma_sum + self.lambda_sum
    }

    /// Adds round `t`'s estimate and curvature. Requires `λ_t ∈ (0, 1)`.
    pub fn accumulate(
        &mut self,
        g: &[f64],
        sigma_t: f64,
        lambda_t: f64,
        y_t: &[f64],
    ) -> Result<()> {
        if !(lambda_t > 0.0 && lambda_t < 1.0) {
            return Err(BcoError::Invariant(format!(
                "regularization coefficient must lie in (0, 1), got {lambda_t}"
            )));
        }
        self.accumulate_unchecked(g, sigma_t, lambda_t, y_t)
    }

    /// As [`accumulate`](Self::accumulate) but also admits `λ_t = 0`, for the
    /// fixed-curvature baseline.
    pub fn accumulate_fixed(
        &mut self,
        g: &[f64],
        sigma_t: f64,
        lambda_t: f64,
        y_t: &[f64],
    ) -> Result<()> {
        if !(0.0..1.0).contains(&lambda_t) {
            return Err(BcoError::Invariant(format!(
                "regularization coefficient must lie in [0, 1), got {lambda_t}"
            )));
        }
        self.accumulate_unchecked(g, sigma_t, lambda_t, y_t)
    }

    fn accumulate_unchecked(
        &mut self,
        g: &[f64],
        sigma_t: f64,
        lambda_t: f64,
        y_t: &[f64],
    ) -> Result<()> {
        let n = self.g.len();
        if g.len() != n || y_t.len() != n {
            return Err(BcoError::Invariant("accumulate: dimension mismatch".into()));
        }
        if !(sigma_t >= 0.0) || !sigma_t.is_finite() {
            return Err(BcoError::Invariant(format!(
                "σ_t must be nonnegative, got {sigma_t}"
            )));
        }
        let w = sigma_t + lambda_t;
        for i in 0..n {
            self.g[i] += g[i];
            self.p[i] += w * y_t[i];
        }
        self.s += w;
        self.dropped_constant += 0.5 * w * dot(y_t, y_t);
        self.sigma_sum += sigma_t;
        self.lambda_sum += lambda_t;
        self.t += 1;
        Ok(())
    }
}

/// The FTRL objective restricted to the slice, parameterized by `η`.
pub struct FtrlObjective<'a> {
    pub state: &'a FtrlState,
    pub nb: &'a NormalBarrier,
    pub eta: f64,
}

impl<'a> FtrlObjective<'a> {
    pub fn new(state: &'a FtrlState, nb: &'a NormalBarrier) -> Self {
        FtrlObjective {
            state,
            nb,
            eta: state.eta_next,
        }
    }

    fn lift(x: &[f64]) -> Vec<f64> {
        let mut z = x.to_vec();
        z.push(1.0);
        z
    }

    fn linear_part(&self, z: &[f64]) -> f64 {
        let st = self.state;
        dot(&st.g, z) + 0.5 * (st.s + st.lambda0) * dot(z, z) - dot(&st.p, z)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let z = Self::lift(x);
        Ok(self.linear_part(&z) + self.nb.value(&z)? / self.eta)
    }

    /// Value including the constant that [`value`](Self::value) drops.
    pub fn value_with_constant(&self, x: &[f64]) -> Result<f64> {
        Ok(self.value(x)? + self.state.dropped_constant)
    }

    /// Value, gradient and Hessian in the first `d` coordinates.
    pub fn oracle(&self, x: &[f64]) -> Result<(f64, Vec<f64>, SymMatrix)> {
        let d = x.len();
        let z = Self::lift(x);
        let e = self.nb.oracle(&z)?;
        let st = self.state;
        let c = st.s + st.lambda0;
        let inv = 1.0 / self.eta;
        let value = self.linear_part(&z) + inv * e.value;
        let grad = (0..d)
            .map(|i| st.g[i] + c * x[i] - st.p[i] + inv * e.grad[i])
            .collect();
        let mut hess = e.hess.top_left(d).scaled(inv);
        hess.add_diag(c);
        Ok((value, grad, hess))
    }
}

/// Outcome of a Newton solve.
#[derive(Clone, Debug)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub decrement: f64,
    pub iterations: usize,
}

/// Damped Newton with backtracking. `oracle` must return an error for points
/// outside the domain; such trial points are rejected by halving the step.
pub fn newton_minimize(
    x0: &[f64],
    oracle: impl Fn(&[f64]) -> Result<(f64, Vec<f64>, SymMatrix)>,
    value: impl Fn(&[f64]) -> Result<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<NewtonResult> {
    let mut x = x0.to_vec();
    let mut trace: Vec<f64> = Vec::new();
    for iter in 0..max_iter {
        let (fx, grad, hess) = oracle(&x)?;
        let step = Cholesky::new(&hess)?.solve(&grad);
        let dec = dot(&grad, &step).max(0.0).sqrt();
        trace.push(dec);
        if dec <= tol {
            return Ok(NewtonResult {
                x,
                decrement: dec,
                iterations: iter,
            });
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a - alpha * s).collect();
            if let Ok(ft) = value(&trial) {
                if ft.is_finite()
                    && (dec < QUADRATIC_REGION || ft <= fx - ARMIJO_C * alpha * dec * dec)
                {
                    x = trial;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(BcoError::solver(
                "line search could not find an admissible step",
                &trace,
            ));
        }
    }
    let (_, grad, hess) = oracle(&x)?;
    let dec = dot(&grad, &Cholesky::new(&hess)?.solve(&grad))
        .max(0.0)
        .sqrt();
    trace.push(dec);
    if dec <= tol {
        return Ok(NewtonResult {
            x,
            decrement: dec,
            iterations: max_iter,
        });
    }
    Err(BcoError::solver(
        format!("no convergence after {max_iter} iterations"),
        &trace,
    ))
}

/// `ŷ₁ = argmin_{x̂ ∈ lifted X} Ψ(x̂)`, started from the origin.
pub fn analytic_start(nb: &NormalBarrier) -> Result<Vec<f64>> {
    let d = nb.dim();
    let lift = |x: &[f64]| {
        let mut z = x.to_vec();
        z.push(1.0);
        z
    };
    let res = newton_minimize(
        &vec![0.0; d],
        |x| {
            let e = nb.oracle(&lift(x))?;
            Ok((e.value, e.grad[..d].to_vec(), e.hess.top_left(d)))
        },
        |x| nb.value(&lift(x)),
        1e-10,
        NEWTON_MAX_ITER,
    )?;
    Ok(lift(&res.x))
}

/// `ŷ_{t+1}`, warm-started from `ŷ_t`.
pub fn ftrl_solve(state: &FtrlState, nb: &NormalBarrier) -> Result<Vec<f64>> {
    if !(state.eta_next > 0.0) {
        return Err(BcoError::Invariant(format!(
            "η must be positive, got {}",
            state.eta_next
        )));
    }
    let obj = FtrlObjective::new(state, nb);
    let d = nb.dim();
    let res = newton_minimize(
        &state.y_current[..d],
        |x| obj.oracle(x),
        |x| obj.value(x),
        NEWTON_TOL,
        NEWTON_MAX_ITER,
    )?;
    let mut y = res.x;
    y.push(1.0);
    Ok(y)
}

/// `H = ∇²Ψ(ŷ) + η·(σ_{1:t−1} + λ_{0:t−1})·I`.
pub fn compute_h(nb: &NormalBarrier, y: &[f64], eta: f64, curvature_sum: f64) -> Result<SymMatrix> {
    let mut h = nb.oracle(y)?.hess;
    h.add_diag(eta * curvature_sum);
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::{ball_barrier, lift_normal, Barrier, Domain};
    use crate::numerics::sym_eig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn analytic_start_is_centre_for_symmetric_domains() {
        let nb = lift_normal(&ball_barrier(3, 1.0).unwrap());
        assert_eq!(analytic_start(&nb).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        let nb = lift_normal(&Barrier::for_domain(Domain::unit_box(2).unwrap()));
        assert_eq!(analytic_start(&nb).unwrap(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn analytic_start_asymmetric_interval() {
        let nb = lift_normal(&Barrier::for_domain(
            Domain::boxed(&[-1.0], &[0.5]).unwrap(),
        ));
        let y = analytic_start(&nb).unwrap();
        assert!((y[0] + 0.25).abs() < 1e-9);
        let g = nb.oracle(&y).unwrap().grad[0];
        assert!(g.abs() < 1e-9);
    }

    #[test]
    fn accumulate_bookkeeping() {
        let mut st = FtrlState::new(vec![0.0, 1.0], 1.0, 0.1);
        let y = vec![0.0, 1.0];
        for _ in 0..3 {
            st.accumulate(&[0.0, 0.0], 0.5, 0.5, &y).unwrap();
        }
        assert_eq!(st.s, 3.0);
        assert_eq!(st.s, st.sigma_sum + st.lambda_sum - st.lambda0);

        let mut st = FtrlState::new(vec![0.2, 1.0], 1.0, 0.1);
        st.accumulate(&[0.0, 0.0], 0.3, 0.4, &[0.2, 1.0]).unwrap();
        assert!((st.p[0] - 0.7 * 0.2).abs() < 1e-15 && (st.p[1] - 0.7).abs() < 1e-15);

        assert!(st.accumulate(&[0.0, 0.0], 0.0, 1.5, &[0.0, 1.0]).is_err());
        assert!(st.accumulate(&[0.0, 0.0], 0.0, 0.0, &[0.0, 1.0]).is_err());
        assert!(st
            .accumulate_fixed(&[0.0, 0.0], 0.0, 0.0, &[0.0, 1.0])
            .is_ok());
    }

    #[test]
    fn solve_without_losses_returns_centre() {
        let nb = lift_normal(&ball_barrier(2, 1.0).unwrap());
        let st = FtrlState::new(vec![0.0, 0.0, 1.0], 5.0, 0.01);
        let y = ftrl_solve(&st, &nb).unwrap();
        assert!(y[0].abs() < 1e-12 && y[1].abs() < 1e-12 && y[2] == 1.0);
    }

    #[test]
    fn solve_matches_grid_search_in_one_dimension() {
        let nb = lift_normal(&ball_barrier(1, 1.0).unwrap());
        let mut st = FtrlState::new(vec![0.0, 1.0], 0.0, 1e-3);
        st.g = vec![0.5, 0.0];
        let y = ftrl_solve(&st, &nb).unwrap();
        let obj = FtrlObjective::new(&st, &nb);
        let mut best = (f64::INFINITY, 0.0);
        for k in 1..10_000 {
            let x = -1.0 + 2.0 * k as f64 / 10_000.0;
            if let Ok(v) = obj.value(&[x]) {
                if v < best.0 {
                    best = (v, x);
                }
            }
        }
        assert!((y[0] - best.1).abs() < 1e-3);
    }

    #[test]
    fn solution_beats_random_points() {
        let nb = lift_normal(&Barrier::for_domain(Domain::unit_box(2).unwrap()));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut st = FtrlState::new(vec![0.0, 0.0, 1.0], 3.0, 0.05);
        for _ in 0..5 {
            let g: Vec<f64> = (0..3).map(|_| rng.gen_range(-200.0..200.0)).collect();
            let y = st.y_current.clone();
            st.accumulate(&g, rng.gen_range(0.0..1.0), 0.5, &y).unwrap();
            st.y_current = ftrl_solve(&st, &nb).unwrap();
        }
        let obj = FtrlObjective::new(&st, &nb);
        let fy = obj.value(&st.y_current[..2]).unwrap();
        for _ in 0..20 {
            let x = nb.base().domain().sample_interior(&mut rng, 0.999);
            assert!(fy <= obj.value(&x).unwrap() + 1e-9);
        }
    }

    #[test]
    fn dropped_constant_does_not_move_argmin() {
        let nb = lift_normal(&ball_barrier(2, 1.0).unwrap());
        let mut st = FtrlState::new(vec![0.0, 0.0, 1.0], 2.0, 0.02);
        let ys = [[0.1, -0.2, 1.0], [0.3, 0.1, 1.0], [-0.2, 0.4, 1.0]];
        let gs = [[30.0, -10.0, 4.0], [-5.0, 20.0, -2.0], [8.0, 8.0, 0.0]];
        for (g, y) in gs.iter().zip(&ys) {
            st.accumulate(g, 0.7, 0.3, y).unwrap();
        }
        let obj = FtrlObjective::new(&st, &nb);
        let with = newton_minimize(
            &[0.0, 0.0],
            |x| {
                let (v, g, h) = obj.oracle(x)?;
                Ok((v + st.dropped_constant, g, h))
            },
            |x| obj.value_with_constant(x),
            NEWTON_TOL,
            NEWTON_MAX_ITER,
        )
        .unwrap();
        let without = ftrl_solve(&st, &nb).unwrap();
        for i in 0..2 {
            assert!((with.x[i] - without[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn solve_is_deterministic() {
        let nb = lift_normal(&ball_barrier(2, 1.0).unwrap());
        let mut st = FtrlState::new(vec![0.0, 0.0, 1.0], 2.0, 0.02);
        st.accumulate(&[40.0, -10.0, 3.0], 0.2, 0.5, &[0.0, 0.0, 1.0])
            .unwrap();
        assert_eq!(ftrl_solve(&st, &nb).unwrap(), ftrl_solve(&st, &nb).unwrap());
    }

    #[test]
    fn compute_h_examples() {
        let nb = lift_normal(&ball_barrier(2, 1.0).unwrap());
        let h = compute_h(&nb, &[0.0, 0.0, 1.0], 0.1, 0.0).unwrap();
        assert_eq!(h, SymMatrix::from_diag(&[800.0; 3]));
        let y = [0.3, -0.4, 1.0];
        let base = nb.oracle(&y).unwrap().hess;
        let h = compute_h(&nb, &y, 0.5, 4.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let shift = if i == j { 2.0 } else { 0.0 };
                assert_eq!(h.get(i, j) - base.get(i, j), shift);
            }
        }
        assert!(sym_eig(&h).values[0] >= 2.0);
        assert!(compute_h(&nb, &[1.0, 0.0, 1.0], 0.5, 4.0).is_err());
    }
}
