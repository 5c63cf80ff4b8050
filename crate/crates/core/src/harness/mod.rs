//! Experiment runner, offline comparator, exponent fits and file I/O.

pub mod comparator;
pub mod fit;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{AlgoConfig, Feedback, Learner, Mode};
use crate::barrier::{Barrier, DomainSpec};
use crate::env::{EnvSpec, Environment};
use crate::error::{BcoError, Result};

pub use comparator::{offline_comparator, Comparator};
pub use fit::{fit_exponent, ExponentFit};

pub const CSV_HEADER: &str = "t,sigma_t,lambda_t,eta_t,f_val,stability_norm,cum_loss,cum_regret";

/// A complete experiment: domain, learner and environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub algorithm: AlgoConfig,
    pub environment: EnvSpec,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        BcoError::Schema {
            path,
            message: e.into_inner().to_string(),
        }
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

pub fn save_config(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(cfg).map_err(|e| BcoError::Config(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub x: Vec<f64>,
    pub f_val: f64,
    pub sigma_t: f64,
    pub lambda_t: f64,
    pub eta_t: f64,
    pub stability_norm: f64,
    pub cum_loss: f64,
    /// Against the full-horizon comparator.
    pub cum_regret: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Checkpoint {
    pub t: usize,
    /// Cumulative loss minus the best fixed loss over the first `t` rounds.
    pub regret: f64,
}

#[derive(Clone, Debug)]
pub struct Trace {
    pub config: ExperimentConfig,
    /// Algorithm config with constants filled in from the environment.
    pub effective: AlgoConfig,
    pub env_beta: f64,
    pub env_lipschitz: f64,
    pub env_scale: f64,
    pub records: Vec<RoundRecord>,
    pub comparator: Option<Comparator>,
    pub checkpoints: Vec<Checkpoint>,
    pub error: Option<String>,
}

impl Trace {
    pub fn cum_loss(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cum_loss)
    }

    pub fn regret(&self) -> Option<f64> {
        self.comparator
            .as_ref()
            .map(|c| self.cum_loss() - c.total_loss)
    }

    pub fn checkpoint(&self, t: usize) -> Option<f64> {
        self.checkpoints.iter().find(|c| c.t == t).map(|c| c.regret)
    }

    pub fn max_stability(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.stability_norm)
            .fold(0.0, f64::max)
    }
}

/// A failed run: the rounds completed before the error, and the error.
#[derive(Debug)]
pub struct RunFailure {
    pub trace: Box<Trace>,
    pub error: BcoError,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "run failed after {} rounds: {}",
            self.trace.records.len(),
            self.error
        )
    }
}

impl std::error::Error for RunFailure {}

impl From<RunFailure> for BcoError {
    fn from(f: RunFailure) -> Self {
        f.error
    }
}

/// Dyadic checkpoints `2, 4, …, ≤ T`.
pub fn dyadic_checkpoints(horizon: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut t = 2;
    while t <= horizon {
        out.push(t);
        t *= 2;
    }
    out
}

/// Fills `β`/`L` from the environment when the config leaves them unset.
fn effective_config(cfg: &AlgoConfig, env: &Environment) -> AlgoConfig {
    let mut out = cfg.clone();
    match cfg.mode {
        Mode::Smooth | Mode::FixedCurvature if out.beta.is_none() => out.beta = Some(env.beta),
        Mode::Lipschitz if out.lipschitz.is_none() => out.lipschitz = Some(env.lipschitz),
        _ => {}
    }
    out
}

pub fn run_experiment(cfg: &ExperimentConfig) -> std::result::Result<Trace, RunFailure> {
    let mut trace = Trace {
        config: cfg.clone(),
        effective: cfg.algorithm.clone(),
        env_beta: f64::NAN,
        env_lipschitz: f64::NAN,
        env_scale: f64::NAN,
        records: Vec::new(),
        comparator: None,
        checkpoints: Vec::new(),
        error: None,
    };
    match run_into(cfg, &mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => {
            trace.error = Some(error.to_string());
            Err(RunFailure {
                trace: Box::new(trace),
                error,
            })
        }
    }
}

fn run_into(cfg: &ExperimentConfig, trace: &mut Trace) -> Result<()> {
    let domain = cfg.domain.build()?;
    if domain.dim() != cfg.algorithm.d {
        return Err(BcoError::Config(format!(
            "algorithm.d = {} but the domain has dimension {}",
            cfg.algorithm.d,
            domain.dim()
        )));
    }
    let horizon = cfg.algorithm.horizon;
    let env = Environment::generate(&cfg.environment, &domain, horizon)?;
    trace.env_beta = env.beta;
    trace.env_lipschitz = env.lipschitz;
    trace.env_scale = env.scale;
    trace.effective = effective_config(&cfg.algorithm, &env);

    let barrier = Barrier::for_domain(domain.clone());
    let mut learner = Learner::init(trace.effective.clone(), &barrier)?;
    let mut oracle = env.oracle(learner.needs_gradient());
    let mut cum_loss = 0.0;
    trace.records.reserve(horizon);
    for t in 1..=horizon {
        let x = learner.propose()?;
        let f_val = oracle.evaluate(&x)?;
        let gradient = if learner.needs_gradient() {
            Some(oracle.gradient()?)
        } else {
            None
        };
        let sigma_t = oracle.reveal()?;
        let info = learner.step(&Feedback {
            f_val,
            sigma_t,
            gradient,
        })?;
        cum_loss += f_val;
        trace.records.push(RoundRecord {
            t,
            x,
            f_val,
            sigma_t,
            lambda_t: info.lambda,
            eta_t: info.eta,
            stability_norm: info.stability_norm,
            cum_loss,
            cum_regret: f64::NAN,
        });
    }

    let comp = offline_comparator(&env.prefix_sum(horizon), &domain, cfg.environment.seed)?;
    let mut cmp_cum = 0.0;
    for (rec, loss) in trace.records.iter_mut().zip(&env.losses) {
        cmp_cum += loss.value(&comp.x);
        rec.cum_regret = rec.cum_loss - cmp_cum;
    }
    for t in dyadic_checkpoints(horizon) {
        let c = if t == horizon {
            comp.clone()
        } else {
            offline_comparator(&env.prefix_sum(t), &domain, cfg.environment.seed ^ t as u64)?
        };
        trace.checkpoints.push(Checkpoint {
            t,
            regret: trace.records[t - 1].cum_loss - c.total_loss,
        });
    }
    trace.comparator = Some(comp);
    Ok(())
}

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV text for a trace; a failed run ends with an `# error:` marker row.
pub fn csv_string(trace: &Trace) -> String {
    let mut s = String::with_capacity(160 * (trace.records.len() + 2));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in &trace.records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.t,
            sci(r.sigma_t),
            sci(r.lambda_t),
            sci(r.eta_t),
            sci(r.f_val),
            sci(r.stability_norm),
            sci(r.cum_loss),
            sci(r.cum_regret)
        );
    }
    if let Some(e) = &trace.error {
        let _ = writeln!(s, "# error: {}", e.replace('\n', " "));
    }
    s
}

pub fn write_csv(trace: &Trace, path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(trace))?;
    Ok(())
}

/// `(t, cum_loss, cum_regret)` rows of a CSV written by [`write_csv`].
pub fn read_csv_regret(path: &Path) -> Result<Vec<(usize, f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(BcoError::Schema {
                path: path.display().to_string(),
                message: format!("unexpected header {other:?}"),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| BcoError::Schema {
            path: format!("{}:{}", path.display(), i + 2),
            message: format!("malformed {what}"),
        };
        if cols.len() != 8 {
            return Err(bad("row"));
        }
        let t = cols[0].parse().map_err(|_| bad("t"))?;
        let loss = cols[6].parse().map_err(|_| bad("cum_loss"))?;
        let reg = cols[7].parse().map_err(|_| bad("cum_regret"))?;
        out.push((t, loss, reg));
    }
    Ok(out)
}

/// Mean and standard error of checkpoint regret across runs.
#[derive(Clone, Debug, Serialize)]
pub struct CheckpointSummary {
    pub t: usize,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSummary {
    pub runs: usize,
    pub failures: usize,
    pub checkpoints: Vec<CheckpointSummary>,
    pub fit: Option<ExponentFit>,
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-checkpoint statistics, and a fit over checkpoints `≥ min_t`.
pub fn summarize(traces: &[Trace], failures: usize, min_t: usize) -> SweepSummary {
    let mut checkpoints = Vec::new();
    if let Some(first) = traces.first() {
        for cp in &first.checkpoints {
            let vals: Vec<f64> = traces.iter().filter_map(|t| t.checkpoint(cp.t)).collect();
            let (mean, std_error) = mean_and_se(&vals);
            checkpoints.push(CheckpointSummary {
                t: cp.t,
                mean,
                std_error,
            });
        }
    }
    let pts: Vec<(f64, f64)> = checkpoints
        .iter()
        .filter(|c| c.t >= min_t)
        .map(|c| (c.t as f64, c.mean))
        .collect();
    let fit = fit_exponent(&pts).ok();
    SweepSummary {
        runs: traces.len(),
        failures,
        checkpoints,
        fit,
    }
}

/// Runs `cfg` once per algorithm seed, in parallel.
pub fn sweep(cfg: &ExperimentConfig, seeds: &[u64]) -> Vec<std::result::Result<Trace, RunFailure>> {
    seeds
        .par_iter()
        .map(|&s| {
            let mut c = cfg.clone();
            c.algorithm.seed = s;
            run_experiment(&c)
        })
        .collect()
}
