//! `lbjump`: run locally-balanced jump process experiments from JSON configs
//! and write CSV results.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Ctx;

#[derive(Parser, Debug)]
#[command(name = "lbjump", version, about = "Locally-balanced Markov jump process experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; overrides the config's `out` (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads.
    #[arg(long, global = true, env = "LBJUMP_THREADS")]
    threads: Option<usize>,

    /// Seed from the wall clock when no seed is given.
    #[arg(long, global = true)]
    nondeterministic: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Simulate trajectories (exact on discrete spaces, thinning otherwise).
    Simulate,
    /// Spectral gaps, sandwich and comparison certificates.
    Gaps,
    /// Hitting-time brackets and Monte Carlo means on birth-death chains.
    Hitting,
    /// Diffusion-limit KS schedule.
    Difflimit,
    /// MC / IS / MH estimator comparison.
    Estimators,
    /// Non-reversible kernel certificates and mixing curves.
    Nonrev,
    /// Check the balancing identity and bounds.
    CheckBalancing,
    /// Run the acceptance criteria.
    Accept,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let ctx = Ctx { seed: cli.seed, out: cli.out.clone(), nondeterministic: cli.nondeterministic };
    let path = cli.config.as_deref();
    let result = match cli.command {
        Command::Simulate => commands::simulate(path, &ctx),
        Command::Gaps => commands::gaps(path, &ctx),
        Command::Hitting => commands::hitting(path, &ctx),
        Command::Difflimit => commands::difflimit(path, &ctx),
        Command::Estimators => commands::estimators(path, &ctx),
        Command::Nonrev => commands::nonrev(path, &ctx),
        Command::CheckBalancing => commands::check_balancing_cmd(path, &ctx),
        Command::Accept => commands::accept(path, &ctx),
    };
    match result {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.certified {
                ExitCode::SUCCESS
            } else {
                eprintln!("certification failed");
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
