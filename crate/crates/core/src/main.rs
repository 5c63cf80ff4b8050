use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use hetero_bco::barrier::Barrier;
use hetero_bco::env::{env_validate, EnvReport, Environment};
use hetero_bco::harness::{
    fit_exponent, load_config, mean_and_se, read_csv_regret, run_experiment, summarize, sweep,
    write_csv, ExperimentConfig, ExponentFit,
};
use hetero_bco::validation::{barrier_property_suite, BarrierReport};
use hetero_bco::BcoError;

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "bco", version, about = "Bandit convex optimization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write the per-round CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the environment and barrier properties for a config.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Fit the regret exponent over the dyadic rows of one or more CSVs.
    FitExponent {
        #[arg(long, num_args = 1.., required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        min_t: usize,
    },
    /// Run the config under N algorithm seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seeds: u64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        min_t: usize,
    },
}

enum Failure {
    Config(BcoError),
    Failed(String),
}

impl From<BcoError> for Failure {
    fn from(e: BcoError) -> Self {
        match e {
            BcoError::Config(_) | BcoError::Schema { .. } | BcoError::Io(_) => Failure::Config(e),
            other => Failure::Failed(other.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    let cfg = load_config(path).map_err(Failure::Config)?;
    cfg.domain.build().map_err(Failure::Config)?;
    Ok(cfg)
}

fn print_json<T: Serialize>(value: &T) {
    match serde_json::to_string_pretty(value) {
        Ok(s) => println!("{s}"),
        Err(e) => log::error!("cannot serialize report: {e}"),
    }
}

fn cmd_run(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = load(config)?;
    match run_experiment(&cfg) {
        Ok(trace) => {
            write_csv(&trace, out)?;
            log::info!(
                "{} rounds, regret {:?}",
                trace.records.len(),
                trace.regret()
            );
            Ok(())
        }
        Err(fail) => {
            write_csv(&fail.trace, out)?;
            Err(fail.error.into())
        }
    }
}

#[derive(Serialize)]
struct ValidateReport {
    environment: EnvReport,
    barrier: BarrierReport,
}

fn cmd_validate(config: &Path, samples: usize, trials: usize) -> Result<(), Failure> {
    let cfg = load(config)?;
    let domain = cfg.domain.build()?;
    let env = Environment::generate(&cfg.environment, &domain, cfg.algorithm.horizon)?;
    let report = ValidateReport {
        environment: env_validate(&env, samples, cfg.environment.seed),
        barrier: barrier_property_suite(
            &Barrier::for_domain(domain),
            trials,
            cfg.environment.seed,
        )?,
    };
    print_json(&report);
    if report.environment.passed() && report.barrier.passed() {
        Ok(())
    } else {
        Err(Failure::Failed("validation failures".into()))
    }
}

#[derive(Serialize)]
struct FitReport {
    files: usize,
    points: Vec<(usize, f64)>,
    fit: ExponentFit,
}

fn cmd_fit(files: &[PathBuf], min_t: usize) -> Result<(), Failure> {
    let mut columns: Vec<Vec<(usize, f64, f64)>> = Vec::new();
    for f in files {
        columns.push(read_csv_regret(f)?);
    }
    let mut points = Vec::new();
    for &(t, _, _) in &columns[0] {
        if !t.is_power_of_two() || t < min_t.max(2) {
            continue;
        }
        let vals: Vec<f64> = columns
            .iter()
            .filter_map(|rows| rows.iter().find(|r| r.0 == t).map(|r| r.2))
            .collect();
        if vals.len() == columns.len() {
            points.push((t, mean_and_se(&vals).0));
        }
    }
    let pts: Vec<(f64, f64)> = points.iter().map(|&(t, r)| (t as f64, r)).collect();
    let fit = fit_exponent(&pts).map_err(|e| Failure::Failed(e.to_string()))?;
    print_json(&FitReport {
        files: files.len(),
        points,
        fit,
    });
    Ok(())
}

fn cmd_sweep(config: &Path, n: u64, out_dir: Option<&Path>, min_t: usize) -> Result<(), Failure> {
    let cfg = load(config)?;
    let base = cfg.algorithm.seed;
    let seeds: Vec<u64> = (0..n).map(|i| base.wrapping_add(i)).collect();
    let results = sweep(&cfg, &seeds);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(BcoError::from)?;
    }
    let mut traces = Vec::new();
    let mut failures = 0;
    for (seed, res) in seeds.iter().zip(results) {
        let trace = match res {
            Ok(t) => t,
            Err(fail) => {
                log::warn!("seed {seed}: {}", fail.error);
                failures += 1;
                *fail.trace
            }
        };
        if let Some(dir) = out_dir {
            write_csv(&trace, &dir.join(format!("seed_{seed}.csv")))?;
        }
        if trace.error.is_none() {
            traces.push(trace);
        }
    }
    let summary = summarize(&traces, failures, min_t);
    if let Some(dir) = out_dir {
        let text =
            serde_json::to_string_pretty(&summary).map_err(|e| BcoError::Config(e.to_string()))?;
        std::fs::write(dir.join("summary.json"), text + "\n").map_err(BcoError::from)?;
    }
    print_json(&summary);
    if failures > 0 {
        Err(Failure::Failed(format!("{failures} of {n} runs failed")))
    } else {
        Ok(())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out } => cmd_run(config, out),
        Command::Validate {
            config,
            samples,
            trials,
        } => cmd_validate(config, *samples, *trials),
        Command::FitExponent { csv, min_t } => cmd_fit(csv, *min_t),
        Command::Sweep {
            config,
            seeds,
            out_dir,
            min_t,
        } => cmd_sweep(config, *seeds, out_dir.as_deref(), *min_t),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}
