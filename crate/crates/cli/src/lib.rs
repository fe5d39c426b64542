//! The `mfc` command-line tool: builds lattice chains, integrates both
//! systems, runs the model-predictive couplings and sweeps over the lattice
//! spacing and the partition.
//!
//! Exit codes: 0 success, 2 configuration error, 3 resource limit,
//! 4 runtime or coupling failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod setup;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] mfc_core::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: mfc_core::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use mfc_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::Configuration(_) | E::Parse(_) | E::Json(_)) => 2,
            CliError::Core(E::Resource(_)) => 3,
            CliError::Core(_) | CliError::Output { .. } => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "mfc",
    version,
    about = "Mean field control systems and their lattice Markov chain approximations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the lattice chain and check its approximation constants.
    BuildChain(RunArgs),
    /// Integrate the deterministic system under a sampled distribution of controls.
    SimulateMfc(RunArgs),
    /// Integrate the Kolmogorov equation under a sampled feedback policy.
    SimulateChain(RunArgs),
    /// Deterministic controls built from chain feedback.
    MpcForward(RunArgs),
    /// Chain feedback built from deterministic controls.
    MpcReverse(RunArgs),
    /// Sweep the lattice spacing or the partition and fit the decay.
    Convergence(RunArgs),
    /// Estimate the Hausdorff distance between the bundles of motions.
    Hausdorff(RunArgs),
}

impl Command {
    pub fn args(&self) -> &RunArgs {
        match self {
            Command::BuildChain(a)
            | Command::SimulateMfc(a)
            | Command::SimulateChain(a)
            | Command::MpcForward(a)
            | Command::MpcReverse(a)
            | Command::Convergence(a)
            | Command::Hausdorff(a) => a,
        }
    }
}

/// Runs a parsed command and returns the lines to print.
pub fn run(cli: &Cli) -> Result<Vec<String>, CliError> {
    let args = cli.command.args();
    let loaded = config::load(&args.config)?;
    let mut cfg = loaded.config;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let ctx = commands::Context::new(cfg, loaded.base_dir, args.out.clone())?;
    let work = || match &cli.command {
        Command::BuildChain(_) => commands::build_chain(&ctx),
        Command::SimulateMfc(_) => commands::simulate_mfc(&ctx),
        Command::SimulateChain(_) => commands::simulate_chain(&ctx),
        Command::MpcForward(_) => commands::mpc(&ctx, config::Direction::Forward),
        Command::MpcReverse(_) => commands::mpc(&ctx, config::Direction::Reverse),
        Command::Convergence(_) => commands::convergence(&ctx),
        Command::Hausdorff(_) => commands::hausdorff(&ctx),
    };
    match args.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
            pool.install(work)
        }
        None => work(),
    }
}

/// Entry point shared by the binary and the tests.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
