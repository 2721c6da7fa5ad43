use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dwpt::experiment::{self, ExperimentConfig, FULL_SCALE_TRIALS};
use dwpt::verify::{self, Suite};

#[derive(Parser)]
#[command(name = "dwpt", version, about = "Run relay design experiments and self-checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write results.csv and manifest.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the configured trial count.
        #[arg(long, conflicts_with = "full_scale")]
        trials: Option<usize>,
        /// Override the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// 500 trials per cell.
        #[arg(long)]
        full_scale: bool,
    },
    /// Run a built-in self-check suite.
    Verify {
        #[arg(long, value_enum)]
        suite: SuiteArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Invariants,
    Oracle,
    Robust,
}

fn run(config: PathBuf, out: PathBuf, trials: Option<usize>, seed: Option<u64>, full_scale: bool) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
    if full_scale {
        cfg.trials = FULL_SCALE_TRIALS;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let result = experiment::run(&cfg)?;
    let (csv, manifest) = result.emit(&out)?;
    for cell in result.cells() {
        println!(
            "{:<14} {:>12} feasible {:>4}/{:<4} mean R_s {:.4}",
            cell.scheme,
            experiment::fmt_num(cell.sweep_value),
            cell.feasible,
            cell.trials,
            cell.mean_rate_s
        );
    }
    println!("wrote {} and {}", csv.display(), manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            out,
            trials,
            seed,
            full_scale,
        } => run(config, out, trials, seed, full_scale).map(|_| true),
        Command::Verify { suite } => {
            let suite = match suite {
                SuiteArg::Invariants => Suite::Invariants,
                SuiteArg::Oracle => Suite::Oracle,
                SuiteArg::Robust => Suite::Robust,
            };
            let checks = verify::run(suite);
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
