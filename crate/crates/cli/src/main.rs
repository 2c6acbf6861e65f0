//! `oftrl`: generate games, run the solver, check the weight schedule and
//! sweep configurations for rate fitting.
//!
//! Exit codes: 0 success, 1 check or validation failure, 2 usage error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "oftrl",
    version,
    about = "Optimistic FTRL for zero-sum Markov games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a random or fixture game document.
    #[command(group(ArgGroup::new("source").required(true).args(["seed", "fixture"])))]
    Gen(GenArgs),
    /// Run the solver on a game file and write the checkpoint CSV and policies.
    Solve(SolveArgs),
    /// Check the step-size profile properties and the harmonic bound.
    VerifyWeights(VerifyArgs),
    /// Run several arms and fit the convergence rate of each.
    #[command(group(ArgGroup::new("source").required(true).args(["game", "seed"])))]
    Sweep(SweepArgs),
}

#[derive(Debug, clap::Args)]
pub struct GenArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "H", requires = "seed")]
    pub horizon: Option<usize>,
    #[arg(long = "S", requires = "seed")]
    pub states: Option<usize>,
    #[arg(long = "A", requires = "seed")]
    pub actions_max: Option<usize>,
    #[arg(long = "B", requires = "seed")]
    pub actions_min: Option<usize>,
    /// matching_pennies, rps, single_entry, two_stage, constant(c) or constant(c,H)
    #[arg(long)]
    pub fixture: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub game: PathBuf,
    #[arg(long = "T")]
    pub iterations: usize,
    #[arg(long = "c-eta", default_value_t = 0.125)]
    pub c_eta: f64,
    /// Log-spaced checkpoint count, or an explicit comma-separated list.
    #[arg(long)]
    pub checkpoints: Option<String>,
    #[arg(long = "no-optimism")]
    pub no_optimism: bool,
    /// Exit 1 if any bound check fails.
    #[arg(long)]
    pub strict: bool,
    /// Skip Q* and every metric that depends on it.
    #[arg(long = "no-delta")]
    pub no_delta: bool,
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct VerifyArgs {
    #[arg(long = "H-max", default_value_t = 8)]
    pub horizon_max: usize,
    #[arg(long = "t-max", default_value_t = 5000)]
    pub t_max: usize,
}

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    #[arg(long, conflicts_with = "seed")]
    pub game: Option<PathBuf>,
    /// Comma-separated generator seeds; needs --H --S --A --B.
    #[arg(long, value_delimiter = ',', requires_all = ["horizon", "states", "actions_max", "actions_min"])]
    pub seed: Vec<u64>,
    #[arg(long = "H")]
    pub horizon: Option<usize>,
    #[arg(long = "S")]
    pub states: Option<usize>,
    #[arg(long = "A")]
    pub actions_max: Option<usize>,
    #[arg(long = "B")]
    pub actions_min: Option<usize>,
    #[arg(long = "c-eta", default_value_t = 0.125)]
    pub c_eta: f64,
    /// Comma-separated iteration counts. With several values they are the
    /// checkpoints of one run; with one value, log-spaced checkpoints are used.
    #[arg(long = "T", value_delimiter = ',', required = true)]
    pub iterations: Vec<usize>,
    /// Log-spaced checkpoint count when a single T is given.
    #[arg(long, default_value_t = oftrl_core::solver::DEFAULT_CHECKPOINTS)]
    pub checkpoints: usize,
    /// Add a non-optimistic baseline arm next to each optimistic arm.
    #[arg(long = "no-optimism")]
    pub no_optimism: bool,
    #[arg(long)]
    pub strict: bool,
    #[arg(long = "no-delta")]
    pub no_delta: bool,
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(args) => commands::gen(&args),
        Command::Solve(args) => commands::solve(&args),
        Command::VerifyWeights(args) => commands::verify_weights(&args),
        Command::Sweep(args) => commands::sweep(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) if err.is::<commands::UsageError>() => {
            eprintln!("usage error: {err}");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
