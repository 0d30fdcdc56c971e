#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedgraph::experiment::{
    expand, generate_dataset, resolve, run_experiment, run_testbed, RawConfig, SUMMARY_HEADER,
};
use fedgraph::privacy::{calibrate_sigma, compose_and_convert, AccountantState};
use fedgraph::Error;

const CONFIG_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;

#[derive(Parser)]
#[command(
    name = "fedgraph",
    version,
    about = "Federated multimodal graph learning with client-level DP"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config (sweeps expand to a grid).
    Run { config: PathBuf },
    /// Write a synthetic dataset in the MEx directory layout.
    GenData { config: PathBuf },
    /// Smallest noise multiplier meeting (epsilon, delta) over T releases.
    Calibrate {
        #[arg(long, allow_hyphen_values = true)]
        epsilon: f64,
        #[arg(long, allow_hyphen_values = true)]
        delta: f64,
        #[arg(long, allow_hyphen_values = true)]
        q: f64,
        #[arg(long, allow_hyphen_values = true)]
        steps: u64,
    },
    /// Run the quadratic convergence testbed.
    Testbed { config: PathBuf },
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

fn load(path: &Path) -> Result<RawConfig, Failure> {
    let raw = RawConfig::read(path).map_err(Failure::Config)?;
    expand(&raw).map_err(Failure::Config)?;
    Ok(raw)
}

fn single(path: &Path) -> Result<fedgraph::experiment::ExperimentConfig, Failure> {
    let raw = RawConfig::read(path).map_err(Failure::Config)?;
    if let Some((key, _)) = raw.sweeps.first() {
        return Err(Failure::Config(Error::Config {
            key: format!("sweep.{key}"),
            message: "sweeps are only supported by `run`".into(),
        }));
    }
    resolve(&raw).map_err(Failure::Config)
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { config } => {
            let raw = load(&config)?;
            let outcomes = run_experiment(&raw).map_err(Failure::Runtime)?;
            println!("{SUMMARY_HEADER}");
            for o in outcomes {
                println!("{}", o.summary.csv_row());
            }
        }
        Command::GenData { config } => {
            let cfg = single(&config)?;
            let out = generate_dataset(&cfg).map_err(Failure::Runtime)?;
            println!("{}", out.display());
        }
        Command::Calibrate {
            epsilon,
            delta,
            q,
            steps,
        } => {
            let bad = |key: &str, msg: &str| {
                Failure::Config(Error::Config {
                    key: key.into(),
                    message: msg.into(),
                })
            };
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(bad("epsilon", "must be positive and finite"));
            }
            if !(delta > 0.0 && delta < 1.0) {
                return Err(bad("delta", "must lie in (0, 1)"));
            }
            if !(q > 0.0 && q <= 1.0) {
                return Err(bad("q", "must lie in (0, 1]"));
            }
            if steps == 0 {
                return Err(bad("steps", "must be at least 1"));
            }
            let sigma = calibrate_sigma(epsilon, delta, q, steps).map_err(Failure::Runtime)?;
            let state = AccountantState::for_mechanism(q, sigma).map_err(Failure::Runtime)?;
            let spent = compose_and_convert(&state, steps, delta).map_err(Failure::Runtime)?;
            println!("sigma,epsilon_spent");
            println!("{sigma:.16e},{spent:.16e}");
        }
        Command::Testbed { config } => {
            let cfg = single(&config)?;
            let t = run_testbed(&cfg, &cfg.output).map_err(Failure::Runtime)?;
            let last = t.mean.last().copied().unwrap_or(f64::NAN);
            println!("final_mean_sq_dist,floor_theoretical");
            println!("{last:.16e},{:.16e}", t.floor);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { CONFIG_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("{e}");
            ExitCode::from(CONFIG_ERROR)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(RUNTIME_ERROR)
        }
    }
}
