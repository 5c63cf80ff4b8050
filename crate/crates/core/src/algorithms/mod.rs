//! The adaptive smooth and Lipschitz learners, and the AOGD and
//! fixed-curvature baselines.

pub mod aogd;
pub mod sampler;
pub mod tuning;

use serde::{Deserialize, Serialize};

use crate::barrier::{lift_normal, Barrier, NormalBarrier};
use crate::error::{BcoError, Result};
use crate::ftrl::{analytic_start, compute_h, ftrl_solve, FtrlState};
use crate::numerics::{local_norm, sub, SpdRoots, SymMatrix};
use crate::rng::{seeded, RunRng};

pub use aogd::AogdState;
pub use sampler::{grad_estimator, sample_orthosphere, sample_with_roots, SliceSample};
pub use tuning::{
    aogd_lambda, eta_lipschitz, eta_smooth, residual_lipschitz, residual_smooth, rho_lipschitz,
    rho_smooth, tune_lambda_lipschitz, tune_lambda_smooth,
};

/// Tolerance on per-round geometric invariants of the sampler.
const SLICE_TOL: f64 = 1e-8;
/// Tolerance on the tuning-equation residual.
pub const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Smooth,
    Lipschitz,
    Aogd,
    FixedCurvature,
}

/// Multipliers on `ρ`, on the dimension term of `λ₀`, and on `η`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default = "one")]
    pub c_rho: f64,
    #[serde(default = "one")]
    pub c_lambda0: f64,
    #[serde(default = "one")]
    pub c_eta: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for Overrides {
    fn default() -> Self {
        Overrides {
            c_rho: 1.0,
            c_lambda0: 1.0,
            c_eta: 1.0,
        }
    }
}

impl Overrides {
    pub fn is_default(&self) -> bool {
        self.c_rho == 1.0 && self.c_lambda0 == 1.0 && self.c_eta == 1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoConfig {
    pub mode: Mode,
    pub d: usize,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, rename = "L", skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_eta: Option<f64>,
}

impl AlgoConfig {
    pub fn new(mode: Mode, d: usize, horizon: usize) -> Self {
        AlgoConfig {
            mode,
            d,
            horizon,
            beta: None,
            lipschitz: None,
            overrides: Overrides::default(),
            seed: 0,
            fixed_sigma: None,
            fixed_eta: None,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_overrides(mut self, c_rho: f64, c_lambda0: f64, c_eta: f64) -> Self {
        self.overrides = Overrides {
            c_rho,
            c_lambda0,
            c_eta,
        };
        self
    }

    pub fn with_fixed(mut self, sigma: f64, eta: f64) -> Self {
        self.fixed_sigma = Some(sigma);
        self.fixed_eta = Some(eta);
        self
    }

    fn nonneg(v: Option<f64>, name: &str, mode: Mode) -> Result<f64> {
        match v {
            Some(x) if x >= 0.0 && x.is_finite() => Ok(x),
            Some(x) => Err(BcoError::Config(format!(
                "{name} must be nonnegative, got {x}"
            ))),
            None => Err(BcoError::Config(format!(
                "{name} is required in {mode:?} mode"
            ))),
        }
    }

    pub fn beta_value(&self) -> Result<f64> {
        Self::nonneg(self.beta, "beta", self.mode)
    }

    pub fn lipschitz_value(&self) -> Result<f64> {
        Self::nonneg(self.lipschitz, "L", self.mode)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(BcoError::Config("d must be at least 1".into()));
        }
        if self.horizon < 3 {
            return Err(BcoError::Config(format!(
                "horizon must be at least 3, got {}",
                self.horizon
            )));
        }
        let o = &self.overrides;
        for (name, v) in [
            ("c_rho", o.c_rho),
            ("c_lambda0", o.c_lambda0),
            ("c_eta", o.c_eta),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(BcoError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        match self.mode {
            Mode::Smooth => {
                self.beta_value()?;
            }
            Mode::Lipschitz => {
                self.lipschitz_value()?;
            }
            Mode::Aogd => {}
            Mode::FixedCurvature => {
                Self::nonneg(self.fixed_sigma, "fixed_sigma", self.mode)?;
                match self.fixed_eta {
                    Some(e) if e > 0.0 && e.is_finite() => {}
                    Some(e) => {
                        return Err(BcoError::Config(format!(
                            "fixed_eta must be positive, got {e}"
                        )))
                    }
                    None => {
                        return Err(BcoError::Config(
                            "fixed_eta is required in FixedCurvature mode".into(),
                        ))
                    }
                }
            }
        }
        Ok(())
    }
}

/// Quantities fixed at initialization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants {
    pub nu: f64,
    /// `ρ` (smooth) or `ρ′` (Lipschitz) before overrides.
    pub rho: f64,
    /// `c_ρ · ρ`.
    pub rho_eff: f64,
    pub lambda0: f64,
    pub eta1: f64,
}

/// `ρ`, `λ₀` and `η₁` for a barrier-based mode.
pub fn derive_constants(cfg: &AlgoConfig, nu: f64) -> Result<Constants> {
    cfg.validate()?;
    let o = cfg.overrides;
    let d = cfg.d as f64;
    let lambda0_of = |rho_eff: f64, beta: f64| {
        ((beta + 1.0) * rho_eff / nu).max(o.c_lambda0 * d * d * (beta + 1.0))
    };
    match cfg.mode {
        Mode::Smooth => {
            let beta = cfg.beta_value()?;
            let rho = rho_smooth(nu);
            let lambda0 = lambda0_of(o.c_rho * rho, beta);
            let eta1 = o.c_eta * eta_smooth(cfg.d, beta, nu, cfg.horizon, lambda0);
            Ok(Constants {
                nu,
                rho,
                rho_eff: o.c_rho * rho,
                lambda0,
                eta1,
            })
        }
        Mode::Lipschitz => {
            let l = cfg.lipschitz_value()?;
            let rho = rho_lipschitz(nu, cfg.d, l);
            let lambda0 = (o.c_rho * rho).max(o.c_lambda0 * d * d * (l + 1.0).powi(2));
            let eta1 = o.c_eta * eta_lipschitz(cfg.d, l, cfg.horizon, lambda0);
            Ok(Constants {
                nu,
                rho,
                rho_eff: o.c_rho * rho,
                lambda0,
                eta1,
            })
        }
        Mode::FixedCurvature => {
            let beta = cfg.beta.unwrap_or(0.0);
            let rho = rho_smooth(nu);
            let lambda0 = lambda0_of(o.c_rho * rho, beta);
            let eta1 = cfg.fixed_eta.expect("validated");
            Ok(Constants {
                nu,
                rho,
                rho_eff: o.c_rho * rho,
                lambda0,
                eta1,
            })
        }
        Mode::Aogd => Err(BcoError::Config(
            "AOGD does not use barrier constants".into(),
        )),
    }
}

/// Per-round feedback delivered to a learner.
#[derive(Clone, Debug)]
pub struct Feedback {
    pub f_val: f64,
    pub sigma_t: f64,
    /// Full gradient at the played point; required only by AOGD.
    pub gradient: Option<Vec<f64>>,
}

/// What a learner reports after processing a round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub lambda: f64,
    /// Learning rate in force during the round.
    pub eta: f64,
    /// `‖ŷ_t − ŷ_{t+1}‖_{H_t}`; the Euclidean step for AOGD.
    pub stability_norm: f64,
    /// Absolute residual of the tuning equation (zero when not applicable).
    pub tuning_residual: f64,
    /// `‖ĝ_t‖*_{H_t}` (zero for AOGD).
    pub grad_dual_norm: f64,
}

/// State of the barrier-based learners (smooth, Lipschitz, fixed curvature).
#[derive(Clone, Debug)]
pub struct AlgoState {
    pub config: AlgoConfig,
    pub constants: Constants,
    nb: NormalBarrier,
    pub ftrl: FtrlState,
    /// `η_t`, the rate in force for the current round.
    pub eta_t: f64,
    pub h: SymMatrix,
    pub roots: SpdRoots,
    pub slice: SliceSample,
    pub x_hat: Vec<f64>,
    rng: RunRng,
    proposed: bool,
}

impl AlgoState {
    pub fn init(config: AlgoConfig, barrier: &Barrier) -> Result<Self> {
        config.validate()?;
        if config.d != barrier.dim() {
            return Err(BcoError::Config(format!(
                "config dimension {} does not match domain dimension {}",
                config.d,
                barrier.dim()
            )));
        }
        let constants = derive_constants(&config, barrier.nu())?;
        if (config.horizon as f64) < constants.rho_eff && config.mode != Mode::FixedCurvature {
            log::warn!(
                "horizon {} is below the constant {:.1}; the stability guarantee assumes it is not",
                config.horizon,
                constants.rho_eff
            );
        }
        let nb = lift_normal(barrier);
        let y1 = analytic_start(&nb)?;
        let ftrl = FtrlState::new(y1, constants.lambda0, constants.eta1);
        let mut rng = seeded(config.seed);
        let (h, roots, slice, x_hat) = Self::prepare(&nb, &ftrl, constants.eta1, &mut rng)?;
        Ok(AlgoState {
            config,
            constants,
            nb,
            ftrl,
            eta_t: constants.eta1,
            h,
            roots,
            slice,
            x_hat,
            rng,
            proposed: false,
        })
    }

    pub fn normal_barrier(&self) -> &NormalBarrier {
        &self.nb
    }

    /// Curvature sum that enters `H_t`, `σ_{1:t−1} + λ_{0:t−1}`.
    fn prepare(
        nb: &NormalBarrier,
        ftrl: &FtrlState,
        eta: f64,
        rng: &mut RunRng,
    ) -> Result<(SymMatrix, SpdRoots, SliceSample, Vec<f64>)> {
        let h = compute_h(nb, &ftrl.y_current, eta, ftrl.curvature_sum())?;
        let roots = SpdRoots::new(&h)?;
        let slice = sample_with_roots(&roots, rng);
        let offset = roots.inv_sqrt.matvec(&slice.u);
        let mut x_hat: Vec<f64> = ftrl
            .y_current
            .iter()
            .zip(&offset)
            .map(|(y, o)| y + o)
            .collect();
        let d = x_hat.len() - 1;
        let last = x_hat[d];
        if (last - 1.0).abs() > SLICE_TOL {
            return Err(BcoError::Invariant(format!(
                "played point left the slice: last coordinate {last}"
            )));
        }
        let dot_uw = crate::numerics::dot(&slice.u, &slice.w);
        if dot_uw.abs() > SLICE_TOL {
            return Err(BcoError::Invariant(format!(
                "exploration not orthogonal: u·w = {dot_uw:e}"
            )));
        }
        x_hat[d] = 1.0;
        Ok((h, roots, slice, x_hat))
    }

    /// Point to play this round.
    pub fn propose(&mut self) -> Result<Vec<f64>> {
        let d = self.config.d;
        let x = self.x_hat[..d].to_vec();
        let m = self.nb.base().domain().contains(&x);
        if !m.inside {
            return Err(BcoError::Invariant(format!(
                "played point outside the domain (slack {:e})",
                m.slack
            )));
        }
        self.proposed = true;
        Ok(x)
    }

    pub fn step(&mut self, fb: &Feedback) -> Result<StepInfo> {
        if !self.proposed {
            return Err(BcoError::FeedbackOrder("step called before propose".into()));
        }
        self.proposed = false;
        let cfg = &self.config;
        let d = cfg.d;
        let fixed = cfg.mode == Mode::FixedCurvature;
        let sigma = if fixed {
            cfg.fixed_sigma.expect("validated")
        } else {
            fb.sigma_t
        };
        if !(sigma >= 0.0) {
            return Err(BcoError::Invariant(format!(
                "σ_t must be nonnegative, got {sigma}"
            )));
        }
        let sigma_cum = self.ftrl.sigma_sum + sigma;
        let lambda_prev = self.ftrl.lambda_sum;
        let (lambda, residual) = match cfg.mode {
            Mode::Smooth => {
                let beta = cfg.beta_value()?;
                let l = tune_lambda_smooth(d, beta, sigma_cum, lambda_prev)?;
                (
                    l,
                    residual_smooth(d, beta, sigma_cum + lambda_prev + l, l).abs(),
                )
            }
            Mode::Lipschitz => {
                let lc = cfg.lipschitz_value()?;
                let l = tune_lambda_lipschitz(d, lc, sigma_cum, lambda_prev)?;
                (
                    l,
                    residual_lipschitz(d, lc, sigma_cum + lambda_prev + l, l).abs(),
                )
            }
            Mode::FixedCurvature => (0.0, 0.0),
            Mode::Aogd => unreachable!("AOGD has its own state"),
        };
        if residual > RESIDUAL_TOL {
            return Err(BcoError::Invariant(format!(
                "tuning residual {residual:e} exceeds tolerance"
            )));
        }

        let x = &self.x_hat[..d];
        let g = grad_estimator(d, fb.f_val, lambda, x, &self.roots.sqrt, &self.slice.u);
        let grad_dual_norm = local_norm(&g, &self.h, true)?;
        if grad_dual_norm > 2.0 * d as f64 * (1.0 + 1e-9) {
            return Err(BcoError::Invariant(format!(
                "gradient estimate dual norm {grad_dual_norm} exceeds 2d"
            )));
        }

        let y_t = self.ftrl.y_current.clone();
        if fixed {
            self.ftrl.accumulate_fixed(&g, sigma, lambda, &y_t)?;
        } else {
            self.ftrl.accumulate(&g, sigma, lambda, &y_t)?;
        }

        let c_eta = cfg.overrides.c_eta;
        let total = self.ftrl.curvature_sum();
        let eta_next = match cfg.mode {
            Mode::Smooth => {
                c_eta * eta_smooth(d, cfg.beta_value()?, self.constants.nu, cfg.horizon, total)
            }
            Mode::Lipschitz => c_eta * eta_lipschitz(d, cfg.lipschitz_value()?, cfg.horizon, total),
            _ => self.constants.eta1,
        };
        if eta_next > self.eta_t * (1.0 + 1e-12) {
            return Err(BcoError::Invariant(format!(
                "learning rate increased from {} to {eta_next}",
                self.eta_t
            )));
        }
        self.ftrl.eta_next = eta_next;
        let y_next = ftrl_solve(&self.ftrl, &self.nb)?;
        let stability_norm = local_norm(&sub(&y_t, &y_next), &self.h, false)?;
        self.ftrl.y_current = y_next;

        let eta_round = self.eta_t;
        let (h, roots, slice, x_hat) =
            Self::prepare(&self.nb, &self.ftrl, eta_next, &mut self.rng)?;
        self.h = h;
        self.roots = roots;
        self.slice = slice;
        self.x_hat = x_hat;
        self.eta_t = eta_next;

        Ok(StepInfo {
            lambda,
            eta: eta_round,
            stability_norm,
            tuning_residual: residual,
            grad_dual_norm,
        })
    }
}

/// Any learner the harness can drive.
#[derive(Clone, Debug)]
pub enum Learner {
    Barrier(Box<AlgoState>),
    Aogd(AogdState),
}

impl Learner {
    pub fn init(config: AlgoConfig, barrier: &Barrier) -> Result<Self> {
        match config.mode {
            Mode::Aogd => Ok(Learner::Aogd(AogdState::init(
                config,
                barrier.domain().clone(),
            )?)),
            _ => Ok(Learner::Barrier(Box::new(AlgoState::init(
                config, barrier,
            )?))),
        }
    }

    pub fn propose(&mut self) -> Result<Vec<f64>> {
        match self {
            Learner::Barrier(s) => s.propose(),
            Learner::Aogd(s) => s.propose(),
        }
    }

    pub fn step(&mut self, fb: &Feedback) -> Result<StepInfo> {
        match self {
            Learner::Barrier(s) => s.step(fb),
            Learner::Aogd(s) => s.step(fb),
        }
    }

    pub fn needs_gradient(&self) -> bool {
        matches!(self, Learner::Aogd(_))
    }
}
