//! Seeded loss sequences with heterogeneous strong convexity.
//!
//! Every loss is a quadratic `f(x) = ½xᵀQx + qᵀx + k`, stored in normalized
//! form so that `|f_t| ≤ 1` on the domain. The curvature `σ_t` of round `t`
//! is available only after the loss at the played point has been evaluated.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::barrier::Domain;
use crate::error::{BcoError, Result};
use crate::numerics::{dot, norm2, sub, sym_eig, SymMatrix};
use crate::rng::{gaussian_vec, seeded, unit_vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Quadratic,
    Glm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    First,
    Last,
    Random,
}

/// Number of zero-curvature rounds in a mixture: a fixed count or `⌊T^p⌉`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Count {
    Fixed(usize),
    Power { power: f64 },
}

impl Count {
    pub fn resolve(&self, horizon: usize) -> usize {
        match *self {
            Count::Fixed(m) => m,
            Count::Power { power } => (horizon as f64).powf(power).round() as usize,
        }
    }
}

fn unit_sigma() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Schedule {
    Constant {
        sigma: f64,
    },
    Zero,
    /// `σ` everywhere except `zeros` rounds with `σ_t = 0`.
    Mixture {
        #[serde(default = "unit_sigma")]
        sigma: f64,
        zeros: Count,
        placement: Placement,
    },
    /// `σ_t = sigma · t^{−α}`.
    Decay {
        alpha: f64,
        #[serde(default = "unit_sigma")]
        sigma: f64,
    },
}

/// Raw (pre-normalization) curvature sequence.
pub fn sigma_schedule(kind: &Schedule, horizon: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let check_sigma = |s: f64| -> Result<()> {
        if s >= 0.0 && s.is_finite() {
            Ok(())
        } else {
            Err(BcoError::Config(format!(
                "schedule sigma must be nonnegative, got {s}"
            )))
        }
    };
    match *kind {
        Schedule::Constant { sigma } => {
            check_sigma(sigma)?;
            Ok(vec![sigma; horizon])
        }
        Schedule::Zero => Ok(vec![0.0; horizon]),
        Schedule::Mixture {
            sigma,
            zeros,
            placement,
        } => {
            check_sigma(sigma)?;
            let m = zeros.resolve(horizon);
            if m > horizon {
                return Err(BcoError::Config(format!(
                    "mixture has {m} zero rounds but horizon {horizon}"
                )));
            }
            let mut out = vec![sigma; horizon];
            match placement {
                Placement::First => out[..m].iter_mut().for_each(|s| *s = 0.0),
                Placement::Last => out[horizon - m..].iter_mut().for_each(|s| *s = 0.0),
                Placement::Random => {
                    let mut idx: Vec<usize> = (0..horizon).collect();
                    idx.shuffle(rng);
                    for &i in &idx[..m] {
                        out[i] = 0.0;
                    }
                }
            }
            Ok(out)
        }
        Schedule::Decay { alpha, sigma } => {
            check_sigma(sigma)?;
            if !(0.0..=1.0).contains(&alpha) {
                return Err(BcoError::Config(format!(
                    "decay exponent must lie in [0, 1], got {alpha}"
                )));
            }
            Ok((1..=horizon)
                .map(|t| sigma * (t as f64).powf(-alpha))
                .collect())
        }
    }
}

fn default_users() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub family: Family,
    pub schedule: Schedule,
    #[serde(default)]
    pub seed: u64,
    /// Contexts per round for the GLM family.
    #[serde(default = "default_users")]
    pub users: usize,
}

impl EnvSpec {
    pub fn quadratic(schedule: Schedule, seed: u64) -> Self {
        EnvSpec {
            family: Family::Quadratic,
            schedule,
            seed,
            users: default_users(),
        }
    }

    pub fn glm(schedule: Schedule, seed: u64, users: usize) -> Self {
        EnvSpec {
            family: Family::Glm,
            schedule,
            seed,
            users,
        }
    }
}

/// `f(x) = ½xᵀQx + qᵀx + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadLoss {
    pub q_mat: SymMatrix,
    pub q: Vec<f64>,
    pub k: f64,
}

impl QuadLoss {
    pub fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.q_mat.quad_form(x) + dot(&self.q, x) + self.k
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.q_mat.matvec(x);
        for (gi, qi) in g.iter_mut().zip(&self.q) {
            *gi += qi;
        }
        g
    }

    fn scaled(&self, s: f64) -> QuadLoss {
        QuadLoss {
            q_mat: self.q_mat.scaled(s),
            q: self.q.iter().map(|v| v * s).collect(),
            k: self.k * s,
        }
    }

    /// Upper bound on `|f|` over the ball of radius `r`.
    fn abs_bound(&self, lambda_max: f64, r: f64) -> f64 {
        0.5 * lambda_max.abs() * r * r + norm2(&self.q) * r + self.k.abs()
    }
}

/// One seeded realization of an environment.
#[derive(Clone, Debug)]
pub struct Environment {
    pub spec: EnvSpec,
    pub domain: Domain,
    pub horizon: usize,
    /// Normalized losses.
    pub losses: Vec<QuadLoss>,
    /// Declared post-normalization curvature per round.
    pub sigmas: Vec<f64>,
    /// Normalization scale `B`.
    pub scale: f64,
    /// `max_t λ_max(Q_t)` after normalization.
    pub beta: f64,
    /// Upper bound on the Lipschitz constant over the domain after normalization.
    pub lipschitz: f64,
}

const CENTRE_NORM: f64 = 0.6;
const CENTRE_JITTER: f64 = 0.1;
const TILT_NORM: f64 = 0.3;
const TILT_JITTER: f64 = 0.1;

fn clip_norm(v: Vec<f64>, max: f64) -> Vec<f64> {
    let n = norm2(&v);
    if n <= max {
        v
    } else {
        v.into_iter().map(|x| x * max / n).collect()
    }
}

/// `(σ/2)‖x − c‖² + aᵀx + b` with `c ∈ X`, `‖a‖ ≤ 1`, before normalization.
pub fn make_quadratic_env(spec: &EnvSpec, domain: &Domain, horizon: usize) -> Result<Environment> {
    let mut rng = seeded(spec.seed);
    let raw_sigma = sigma_schedule(&spec.schedule, horizon, &mut rng)?;
    let d = domain.dim();
    let r = domain.outer_radius();
    let c0: Vec<f64> = unit_vector(&mut rng, d)
        .into_iter()
        .map(|v| v * CENTRE_NORM * r)
        .collect();
    let a0: Vec<f64> = unit_vector(&mut rng, d)
        .into_iter()
        .map(|v| v * TILT_NORM)
        .collect();
    let mut raw = Vec::with_capacity(horizon);
    let mut raw_q = Vec::with_capacity(horizon);
    for &sigma in &raw_sigma {
        let jitter = gaussian_vec(&mut rng, d);
        let c_try: Vec<f64> = c0
            .iter()
            .zip(&jitter)
            .map(|(c, j)| c + CENTRE_JITTER * r * j)
            .collect();
        let c = domain.project(&c_try);
        let jitter = gaussian_vec(&mut rng, d);
        let a = clip_norm(
            a0.iter()
                .zip(&jitter)
                .map(|(a, j)| a + TILT_JITTER * j)
                .collect(),
            1.0,
        );
        let b: f64 = rng.gen_range(-0.1..0.1);
        let q: Vec<f64> = c.iter().zip(&a).map(|(ci, ai)| ai - sigma * ci).collect();
        raw.push(QuadLoss {
            q_mat: SymMatrix::from_diag(&vec![sigma; d]),
            q,
            k: 0.5 * sigma * dot(&c, &c) + b,
        });
        raw_q.push((sigma, sigma));
    }
    finish(spec, domain, horizon, raw, raw_q)
}

/// `(1/N) Σᵢ (cᵢᵀx − rᵢ)²`. Rounds whose schedule entry is zero use a
/// rank-deficient set of `d − 1` contexts.
pub fn make_glm_env(spec: &EnvSpec, domain: &Domain, horizon: usize) -> Result<Environment> {
    if spec.users == 0 {
        return Err(BcoError::Config(
            "glm family needs at least one user per round".into(),
        ));
    }
    let mut rng = seeded(spec.seed);
    let raw_sigma = sigma_schedule(&spec.schedule, horizon, &mut rng)?;
    let d = domain.dim();
    let r = domain.outer_radius();
    let theta: Vec<f64> = unit_vector(&mut rng, d)
        .into_iter()
        .map(|v| v * CENTRE_NORM * r)
        .collect();
    let mut raw = Vec::with_capacity(horizon);
    let mut eig = Vec::with_capacity(horizon);
    for &s in &raw_sigma {
        let (n, deficient) = if s > 0.0 {
            (spec.users, false)
        } else {
            ((d - 1).max(1), true)
        };
        let mut gram = SymMatrix::zeros(d);
        let mut lin = vec![0.0; d];
        let mut k = 0.0;
        for _ in 0..n {
            let c = if deficient && d == 1 {
                vec![0.0]
            } else {
                unit_vector(&mut rng, d)
            };
            let resp = dot(&c, &theta) + 0.1 * gaussian_vec(&mut rng, 1)[0];
            gram.add_assign(&SymMatrix::outer(&c, 1.0), 2.0 / n as f64);
            for i in 0..d {
                lin[i] -= 2.0 * resp * c[i] / n as f64;
            }
            k += resp * resp / n as f64;
        }
        let e = sym_eig(&gram);
        let lo = if deficient { 0.0 } else { e.values[0].max(0.0) };
        eig.push((lo, e.values[d - 1]));
        raw.push(QuadLoss {
            q_mat: gram,
            q: lin,
            k,
        });
    }
    finish(spec, domain, horizon, raw, eig)
}

/// Normalizes by `B = max_t (½λ_max R² + ‖q‖R + |k|)`, an upper bound on
/// `max_{x∈X} |f_t(x)|`, and records the post-scaling constants.
fn finish(
    spec: &EnvSpec,
    domain: &Domain,
    horizon: usize,
    raw: Vec<QuadLoss>,
    eig: Vec<(f64, f64)>,
) -> Result<Environment> {
    let r = domain.outer_radius();
    let scale = raw
        .iter()
        .zip(&eig)
        .map(|(l, &(_, hi))| l.abs_bound(hi, r))
        .fold(0.0_f64, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let inv = 1.0 / scale;
    let losses: Vec<QuadLoss> = raw.iter().map(|l| l.scaled(inv)).collect();
    let sigmas: Vec<f64> = eig.iter().map(|&(lo, _)| lo * inv).collect();
    let beta = eig.iter().map(|&(_, hi)| hi * inv).fold(0.0_f64, f64::max);
    let lipschitz = losses
        .iter()
        .zip(&eig)
        .map(|(l, &(_, hi))| hi * inv * r + norm2(&l.q))
        .fold(0.0_f64, f64::max);
    Ok(Environment {
        spec: spec.clone(),
        domain: domain.clone(),
        horizon,
        losses,
        sigmas,
        scale,
        beta,
        lipschitz,
    })
}

impl Environment {
    pub fn generate(spec: &EnvSpec, domain: &Domain, horizon: usize) -> Result<Self> {
        match spec.family {
            Family::Quadratic => make_quadratic_env(spec, domain, horizon),
            Family::Glm => make_glm_env(spec, domain, horizon),
        }
    }

    /// Copy whose declared curvature is multiplied by `factor`. Used to build
    /// deliberately misdeclared environments.
    pub fn with_sigma_scaled(&self, factor: f64) -> Environment {
        let mut e = self.clone();
        e.sigmas.iter_mut().for_each(|s| *s *= factor);
        e
    }

    /// Oracle enforcing the evaluate-then-reveal order.
    pub fn oracle(&self, with_gradient: bool) -> LossOracle<'_> {
        LossOracle {
            env: self,
            t: 0,
            evaluated: None,
            with_gradient,
        }
    }

    /// `Σ_{t<n} f_t`, as a single quadratic.
    pub fn prefix_sum(&self, n: usize) -> QuadLoss {
        let d = self.domain.dim();
        let mut acc = QuadLoss {
            q_mat: SymMatrix::zeros(d),
            q: vec![0.0; d],
            k: 0.0,
        };
        for l in &self.losses[..n] {
            acc.q_mat.add_assign(&l.q_mat, 1.0);
            for i in 0..d {
                acc.q[i] += l.q[i];
            }
            acc.k += l.k;
        }
        acc
    }
}

/// Round-by-round view of an environment.
#[derive(Debug)]
pub struct LossOracle<'a> {
    env: &'a Environment,
    t: usize,
    evaluated: Option<Vec<f64>>,
    with_gradient: bool,
}

impl<'a> LossOracle<'a> {
    /// Zero-based index of the current round.
    pub fn round(&self) -> usize {
        self.t
    }

    pub fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        if self.t >= self.env.horizon {
            return Err(BcoError::FeedbackOrder("horizon exhausted".into()));
        }
        if self.evaluated.is_some() {
            return Err(BcoError::FeedbackOrder(format!(
                "round {} already evaluated",
                self.t + 1
            )));
        }
        self.evaluated = Some(x.to_vec());
        Ok(self.env.losses[self.t].value(x))
    }

    /// Full gradient at the evaluated point, for gradient-feedback baselines.
    pub fn gradient(&self) -> Result<Vec<f64>> {
        if !self.with_gradient {
            return Err(BcoError::FeedbackOrder(
                "gradient feedback is disabled".into(),
            ));
        }
        let x = self.evaluated.as_ref().ok_or_else(|| {
            BcoError::FeedbackOrder("gradient requested before evaluation".into())
        })?;
        Ok(self.env.losses[self.t].gradient(x))
    }

    /// `σ_t` for the round just evaluated; advances to the next round.
    pub fn reveal(&mut self) -> Result<f64> {
        if self.evaluated.take().is_none() {
            return Err(BcoError::FeedbackOrder(format!(
                "σ requested before the loss of round {} was evaluated",
                self.t + 1
            )));
        }
        let s = self.env.sigmas[self.t];
        self.t += 1;
        Ok(s)
    }
}

/// Outcome of one sampled property.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyReport {
    pub property: String,
    pub trials: usize,
    pub failures: usize,
    pub worst_violation: f64,
}

impl PropertyReport {
    fn new(property: &str) -> Self {
        PropertyReport {
            property: property.into(),
            trials: 0,
            failures: 0,
            worst_violation: 0.0,
        }
    }

    /// Records one trial whose violation is `excess` (positive means failure).
    fn record(&mut self, excess: f64) {
        self.trials += 1;
        if excess > 0.0 || excess.is_nan() {
            self.failures += 1;
        }
        if excess > self.worst_violation || excess.is_nan() {
            self.worst_violation = excess;
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EnvReport {
    pub properties: Vec<PropertyReport>,
}

impl EnvReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyReport::passed)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyReport> {
        self.properties.iter().find(|p| p.property == name)
    }
}

/// Sampled checks of smoothness, Lipschitz continuity, declared strong
/// convexity, `σ_t ≤ 4L/D`, and `|f| ≤ 1`.
pub fn env_validate(env: &Environment, samples: usize, seed: u64) -> EnvReport {
    let mut rng = seeded(seed);
    let mut smooth = PropertyReport::new("smoothness");
    let mut lips = PropertyReport::new("lipschitz");
    let mut strong = PropertyReport::new("strong_convexity");
    let mut bound = PropertyReport::new("sigma_le_4L_over_D");
    let mut range = PropertyReport::new("abs_value_le_1");
    let dom = &env.domain;
    let horizon = env.horizon;
    for i in 0..samples {
        // Cover the first and last rounds, then sample uniformly.
        let t = match i {
            0 => 0,
            1 => horizon - 1,
            _ => rng.gen_range(0..horizon),
        };
        let f = &env.losses[t];
        let x = dom.sample_uniform(&mut rng);
        let y = dom.sample_uniform(&mut rng);
        let dist = norm2(&sub(&x, &y));
        let (fx, fy) = (f.value(&x), f.value(&y));
        let (gx, gy) = (f.gradient(&x), f.gradient(&y));

        smooth.record(norm2(&sub(&gx, &gy)) - env.beta * dist * (1.0 + 1e-6) - 1e-12);
        lips.record((fx - fy).abs() - env.lipschitz * dist * (1.0 + 1e-6) - 1e-12);
        let lower = fx + dot(&gx, &sub(&y, &x)) + 0.5 * env.sigmas[t] * dist * dist;
        strong.record(lower - fy - 1e-9);
        range.record(fx.abs().max(fy.abs()) - 1.0);
    }
    let limit = 4.0 * env.lipschitz / dom.diameter();
    for &s in &env.sigmas {
        bound.record(s - limit * (1.0 + 1e-12));
    }
    EnvReport {
        properties: vec![smooth, lips, strong, bound, range],
    }
}
