//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::Rng;

use hetero_bco::algorithms::{AlgoConfig, AlgoState, Feedback, Mode};
use hetero_bco::barrier::{ball_barrier, lift_normal, Barrier, Domain, DomainSpec};
use hetero_bco::env::{env_validate, Count, EnvSpec, Environment, Placement, QuadLoss, Schedule};
use hetero_bco::harness::{
    offline_comparator, run_experiment, summarize, sweep, ExperimentConfig, SweepSummary,
};
use hetero_bco::numerics::{dot, fd_gradient, fd_hessian, local_norm, rel_error, SymMatrix};
use hetero_bco::rng::{gaussian_vec, seeded};
use hetero_bco::validation::{
    mc_unbiasedness, stability_audit, tuning_competitiveness, TuningObjective,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn barriers() -> Vec<(String, Barrier)> {
    let mut out = Vec::new();
    for d in [1, 2, 5] {
        out.push((format!("ball d={d}"), ball_barrier(d, 1.0).unwrap()));
        out.push((
            format!("box d={d}"),
            Barrier::for_domain(Domain::unit_box(d).unwrap()),
        ));
    }
    out
}

fn lifted(x: &[f64], b: f64) -> Vec<f64> {
    let mut z: Vec<f64> = x.iter().map(|v| v * b).collect();
    z.push(b);
    z
}

fn barrier_identities() -> Outcome {
    let mut rng = seeded(101);
    let mut worst: f64 = 0.0;
    for (_, bar) in barriers() {
        let nb = lift_normal(&bar);
        let nu_bar = nb.nu_bar();
        for _ in 0..100 {
            let x = bar.domain().sample_interior(&mut rng, 0.99);
            let z = lifted(&x, rng.gen_range(0.2..5.0));
            let e = nb.oracle(&z).unwrap();
            let hz = e.hess.matvec(&z);
            let neg: Vec<f64> = e.grad.iter().map(|g| -g).collect();
            let dual = local_norm(&e.grad, &e.hess, true).unwrap();
            worst = worst
                .max(rel_error(&hz, &neg, 1e-300))
                .max((dot(&z, &hz) - nu_bar).abs() / nu_bar)
                .max((dual * dual - nu_bar).abs() / nu_bar);
        }
    }
    outcome(
        worst <= 1e-8,
        format!("max relative violation {worst:.3e} (tol 1e-8)"),
    )
}

fn finite_differences() -> Outcome {
    let mut rng = seeded(202);
    let mut worst: f64 = 0.0;
    for (_, bar) in barriers() {
        let nb = lift_normal(&bar);
        for _ in 0..50 {
            let x = bar.domain().sample_interior(&mut rng, 0.95);
            let e = bar.oracle(&x).unwrap();
            let g = fd_gradient(|p| bar.value(p), &x, 1e-6).unwrap();
            let h = fd_hessian(|p| bar.value(p), &x, 1e-4).unwrap();
            worst = worst.max(rel_error(&e.grad, &g, 1e-8)).max(rel_error(
                e.hess.as_slice(),
                h.as_slice(),
                1e-8,
            ));

            let z = lifted(&x, rng.gen_range(0.5..2.0));
            let e = nb.oracle(&z).unwrap();
            let g = fd_gradient(|p| nb.value(p), &z, 1e-6).unwrap();
            let h = fd_hessian(|p| nb.value(p), &z, 1e-4).unwrap();
            worst = worst.max(rel_error(&e.grad, &g, 1e-8)).max(rel_error(
                e.hess.as_slice(),
                h.as_slice(),
                1e-8,
            ));
        }
    }
    outcome(
        worst <= 1e-4,
        format!("max relative error {worst:.3e} (tol 1e-4)"),
    )
}

fn unbiasedness() -> Outcome {
    let bar = ball_barrier(2, 1.0).unwrap();
    let cfg = AlgoConfig::new(Mode::Smooth, 2, 1000)
        .with_beta(1.0)
        .with_seed(5);
    let mut st = AlgoState::init(cfg, &bar).unwrap();
    let loss = QuadLoss {
        q_mat: SymMatrix::from_rows(&[vec![0.8, 0.2], vec![0.2, 0.4]]).unwrap(),
        q: vec![-0.3, 0.1],
        k: 0.05,
    };
    let mut lambda = 0.0;
    for _ in 0..20 {
        let x = st.propose().unwrap();
        let info = st
            .step(&Feedback {
                f_val: loss.value(&x),
                sigma_t: 0.4,
                gradient: None,
            })
            .unwrap();
        lambda = info.lambda;
    }
    let y = st.ftrl.y_current.clone();
    let rep = mc_unbiasedness(&loss, lambda, &y, &st.h, 200_000, 9).unwrap();
    let zs: Vec<String> = rep.z_scores.iter().map(|z| format!("{z:.2}")).collect();
    outcome(
        rep.passed,
        format!(
            "|mean - grad|/SE per coordinate = [{}] (tol 3)",
            zs.join(", ")
        ),
    )
}

fn stability() -> Outcome {
    let cfg = ExperimentConfig {
        domain: DomainSpec::Ball {
            radius: 1.0,
            dim: 2,
        },
        algorithm: AlgoConfig::new(Mode::Smooth, 2, 557_568)
            .with_beta(1.0)
            .with_seed(3),
        environment: EnvSpec::quadratic(Schedule::Constant { sigma: 1.0 }, 11),
    };
    let trace = match run_experiment(&cfg) {
        Ok(t) => t,
        Err(f) => return outcome(false, format!("run failed: {}", f.error)),
    };
    let rep = stability_audit(&trace);
    outcome(
        rep.asserted && rep.violations.is_empty() && rep.rounds == 557_568,
        format!(
            "{} rounds, max norm {:.3e}, {} violations (bound 0.5, asserted: {})",
            rep.rounds,
            rep.max_norm,
            rep.violations.len(),
            rep.asserted
        ),
    )
}

fn tuning() -> Outcome {
    let mut rng = seeded(505);
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    for mode in [Mode::Smooth, Mode::Lipschitz] {
        for _ in 0..20 {
            let t = rng.gen_range(1..=4);
            let d = rng.gen_range(1..=3);
            let param: f64 = rng.gen_range(0.0..2.0);
            let base = match mode {
                Mode::Lipschitz => (d as f64 * (param + 1.0)).powi(2),
                _ => (d * d) as f64 * (param + 1.0),
            };
            let obj = TuningObjective {
                mode,
                d,
                param,
                lambda0: base * rng.gen_range(1.0..4.0),
                sigmas: (0..t).map(|_| rng.gen_range(0.0..1.0)).collect(),
            };
            match tuning_competitiveness(&obj, 0.02) {
                Ok(rep) => worst = worst.max(rep.ratio),
                Err(e) => return outcome(false, format!("tuning failed: {e}")),
            }
            instances += 1;
        }
    }
    outcome(
        worst <= 2.05,
        format!("{instances} instances, max ratio {worst:.4} (tol 2.05)"),
    )
}

fn scaling_config(mode: Mode, schedule: Schedule) -> ExperimentConfig {
    ExperimentConfig {
        domain: DomainSpec::Ball {
            radius: 1.0,
            dim: 2,
        },
        algorithm: AlgoConfig::new(mode, 2, 1 << 16)
            .with_overrides(1e-5, 1e-5, 100.0)
            .with_seed(1),
        environment: EnvSpec::quadratic(schedule, 7),
    }
}

fn run_sweep(cfg: &ExperimentConfig, seeds: usize) -> Result<SweepSummary, String> {
    let seeds: Vec<u64> = (0..seeds as u64).map(|i| cfg.algorithm.seed + i).collect();
    let mut traces = Vec::new();
    for r in sweep(cfg, &seeds) {
        traces.push(r.map_err(|f| f.error.to_string())?);
    }
    Ok(summarize(&traces, 0, 1024))
}

fn final_mean(s: &SweepSummary) -> f64 {
    s.checkpoints.last().map_or(f64::NAN, |c| c.mean)
}

fn regret_scaling() -> Outcome {
    let cases = [
        scaling_config(Mode::Smooth, Schedule::Constant { sigma: 1.0 }),
        scaling_config(Mode::Smooth, Schedule::Zero),
        scaling_config(Mode::Lipschitz, Schedule::Zero),
        scaling_config(
            Mode::Smooth,
            Schedule::Mixture {
                sigma: 1.0,
                zeros: Count::Power { power: 0.75 },
                placement: Placement::Last,
            },
        ),
    ];
    let mut sums = Vec::new();
    for cfg in &cases {
        match run_sweep(cfg, 10) {
            Ok(s) => sums.push(s),
            Err(e) => return outcome(false, format!("sweep failed: {e}")),
        }
    }
    let slope = |s: &SweepSummary| s.fit.as_ref().map_or(f64::NAN, |f| f.slope);
    let (a, b, c) = (slope(&sums[0]), slope(&sums[1]), slope(&sums[2]));
    let (ra, rb, rd) = (
        final_mean(&sums[0]),
        final_mean(&sums[1]),
        final_mean(&sums[3]),
    );
    let ok_a = (0.35..=0.65).contains(&a);
    let ok_b = (0.50..=0.80).contains(&b) && rb > ra;
    let ok_c = (0.60..=0.90).contains(&c);
    let ok_d = rd <= 3.0 * ra && ra <= 3.0 * rd;
    let mark = |ok: bool| if ok { "ok" } else { "out" };
    outcome(
        ok_a && ok_b && ok_c && ok_d,
        format!(
            "(a) exp {a:.3} [{}]; (b) exp {b:.3}, Reg {rb:.0} vs {ra:.0} [{}]; (c) exp {c:.3} [{}]; (d) Reg {rd:.0} vs {ra:.0} [{}]",
            mark(ok_a),
            mark(ok_b),
            mark(ok_c),
            mark(ok_d)
        ),
    )
}

fn aogd_baseline() -> Outcome {
    let cfg = ExperimentConfig {
        domain: DomainSpec::Ball {
            radius: 1.0,
            dim: 2,
        },
        algorithm: AlgoConfig::new(Mode::Aogd, 2, 1 << 16).with_seed(1),
        environment: EnvSpec::quadratic(Schedule::Constant { sigma: 1.0 }, 7),
    };
    let s = match run_sweep(&cfg, 10) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("sweep failed: {e}")),
    };
    let at = |t: usize| {
        s.checkpoints
            .iter()
            .find(|c| c.t == t)
            .map_or(f64::NAN, |c| c.mean)
            / (t as f64).ln()
    };
    let (early, late) = (at(1 << 12), at(1 << 16));
    outcome(
        late <= 2.0 * early,
        format!(
            "Reg/ln T = {early:.4} at 2^12, {late:.4} at 2^16 (ratio {:.3}, tol 2)",
            late / early
        ),
    )
}

fn comparator_certification() -> Outcome {
    let mut rng = seeded(808);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..50 {
        let d = 1 + i % 3;
        let domain = if i % 2 == 0 {
            Domain::ball(d, 1.0).unwrap()
        } else {
            Domain::unit_box(d).unwrap()
        };
        // Random PSD Q = AᵀA/d, rank-deficient on every fifth instance.
        let rows = if i % 5 == 0 { d - 1 } else { d };
        let a: Vec<Vec<f64>> = (0..rows).map(|_| gaussian_vec(&mut rng, d)).collect();
        let mut q_mat = SymMatrix::zeros(d);
        for r in &a {
            q_mat.add_assign(&SymMatrix::outer(r, 1.0 / d as f64), 1.0);
        }
        let q: Vec<f64> = gaussian_vec(&mut rng, d)
            .into_iter()
            .map(|v| 2.0 * v)
            .collect();
        let loss = QuadLoss { q_mat, q, k: 0.0 };
        match offline_comparator(&loss, &domain, 1000 + i as u64) {
            Ok(c) => worst = worst.max(c.worst_probe_gap),
            Err(e) => return outcome(false, format!("instance {i}: {e}")),
        }
    }
    outcome(
        worst <= 1e-6,
        format!("50 instances, largest probe improvement {worst:.3e} (tol 1e-6)"),
    )
}

fn environment_validation() -> Outcome {
    let ball = Domain::ball(2, 1.0).unwrap();
    let cube = Domain::unit_box(3).unwrap();
    let schedules = [
        Schedule::Constant { sigma: 1.0 },
        Schedule::Zero,
        Schedule::Mixture {
            sigma: 1.0,
            zeros: Count::Fixed(50),
            placement: Placement::Random,
        },
        Schedule::Decay {
            alpha: 0.5,
            sigma: 1.0,
        },
    ];
    let mut specs = Vec::new();
    for (i, s) in schedules.iter().enumerate() {
        specs.push((EnvSpec::quadratic(*s, 20 + i as u64), ball.clone()));
        specs.push((EnvSpec::glm(*s, 30 + i as u64, 4), cube.clone()));
    }
    let mut failures = 0;
    let mut checked = 0;
    for (spec, domain) in &specs {
        let env = Environment::generate(spec, domain, 200).unwrap();
        let rep = env_validate(&env, 200, 1);
        failures += rep.properties.iter().map(|p| p.failures).sum::<usize>();
        checked += 1;
    }
    let env = Environment::generate(&specs[0].0, &ball, 200).unwrap();
    let control = env_validate(&env.with_sigma_scaled(2.0), 200, 1);
    let caught = control.get("strong_convexity").map_or(0, |p| p.failures);
    outcome(
        failures == 0 && caught > 0,
        format!("{checked} environments, {failures} failures; misdeclared sigma control: {caught} failures"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    let spec = ExperimentConfig {
        domain: DomainSpec::Ball {
            radius: 1.0,
            dim: 2,
        },
        algorithm: AlgoConfig::new(Mode::Smooth, 2, 2000)
            .with_overrides(1e-5, 1e-5, 100.0)
            .with_seed(42),
        environment: EnvSpec::quadratic(
            Schedule::Decay {
                alpha: 0.5,
                sigma: 1.0,
            },
            3,
        ),
    };
    hetero_bco::harness::save_config(&spec, &cfg).unwrap();
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_bco"))
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        if !status.success() {
            return outcome(false, format!("bco run exited with {status}"));
        }
        outputs.push(std::fs::read(&out).unwrap());
    }
    let same = outputs[0] == outputs[1];
    outcome(
        same && !outputs[0].is_empty(),
        format!("{} bytes, identical: {same}", outputs[0].len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("barrier identities", barrier_identities),
        ("finite-difference derivatives", finite_differences),
        ("gradient estimator unbiasedness", unbiasedness),
        ("FTRL stability", stability),
        ("tuning 2-competitiveness", tuning),
        ("regret scaling", regret_scaling),
        ("AOGD baseline", aogd_baseline),
        ("comparator certification", comparator_certification),
        ("environment validation", environment_validation),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = check();
        let status = if out.passed { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {status} {name}: {} [{:.1}s]",
            i + 1,
            out.detail,
            start.elapsed().as_secs_f64()
        );
        if !out.passed {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
