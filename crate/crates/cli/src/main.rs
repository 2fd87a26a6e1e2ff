use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use phasefield_core::estimates::ErrorReport;
use phasefield_core::harness::{self, Mode, Outcome, RunConfig};

/// Largest accepted defect when re-checking a stored trajectory.
const IDENTITY_TOL: f64 = 1e-10;

#[derive(Parser)]
#[command(name = "phasefield", version, about = "Semi-implicit phase-field solver and verification harness")]
struct Cli {
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true, env = "PHASEFIELD_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single trajectory and write its reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a convergence study, a-priori sweep or source-average study.
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-evaluate the interpolant identities of a stored `trajectory_full.csv`.
    CheckIdentities {
        #[arg(long)]
        trajectory: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("reading config {}", path.display()))
}

fn report(outcome: &Outcome) {
    match outcome {
        Outcome::Single(s) => {
            println!("steps: {}  h = {:e}", s.trajectory.n_steps(), s.trajectory.h());
            println!("max identity defect: {:e}", s.identities.max_defect());
            println!("energy-inequality violation: {:e}", s.norms.energy_step_violation);
            if !s.below_estimate_threshold {
                println!("note: h is not below h1, the energy inequality is not guaranteed");
            }
        }
        Outcome::Convergence(c) => {
            println!("reference N = {}", c.n_ref);
            for (name, slope) in ErrorReport::NAMES.iter().zip(&c.slopes) {
                println!("{name:>16}  slope {slope:.3}");
            }
        }
        Outcome::Sweep(s) => {
            for (name, r) in phasefield_core::estimates::NormReport::MONITORED.iter().zip(&s.ratios) {
                println!("{name:>24}  max/min {r:.3}");
            }
            println!("max energy-inequality violation: {:e}", s.max_energy_violation);
        }
        Outcome::SourceAverage(s) => println!("source-average slope {:.3}", s.slope),
    }
    println!("{}", if outcome.pass() { "PASS" } else { "FAIL" });
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring thread pool")?;
    }
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load(&config)?;
            if cfg.mode != Mode::Single {
                bail!("`run` expects mode \"single\"; use `study` for sweeps");
            }
            let outcome = harness::execute(&cfg, out.as_deref())?;
            report(&outcome);
            Ok(outcome.pass())
        }
        Command::Study { config, out } => {
            let cfg = load(&config)?;
            if cfg.mode == Mode::Single {
                bail!("`study` expects a sweep mode; use `run` for single runs");
            }
            let outcome = harness::execute(&cfg, out.as_deref())?;
            report(&outcome);
            Ok(outcome.pass())
        }
        Command::CheckIdentities { trajectory } => {
            let rep = harness::check_trajectory_file(&trajectory)
                .with_context(|| format!("checking {}", trajectory.display()))?;
            for c in &rep.checks {
                println!("{:<24} lhs {:.6e}  rhs {:.6e}  defect {:.3e}", c.name, c.lhs, c.rhs, c.defect);
            }
            let ok = rep.max_defect() <= IDENTITY_TOL;
            println!("{}", if ok { "PASS" } else { "FAIL" });
            Ok(ok)
        }
    }
}
