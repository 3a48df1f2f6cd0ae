//! `rishield` — scenario simulation, shield optimization, pattern studies.
//!
//! Subcommands: `simulate` (coverage maps), `optimize` (SMSE shield solve),
//! `pattern` (reflectarray cuts and lobes), `sweep` (seed batches).
//! Every run writes a `manifest.txt` capturing the resolved options and
//! input hashes; re-running a manifest reproduces byte-identical outputs.
//! Set `RISHIELD_LOG` for log verbosity.

mod manifest;
mod optimize;
mod pattern_cmd;
mod simulate;
mod sweep;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Exit 2: bad usage or failed input validation. Exit 3: runtime failure.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("io error: {e}"))
    }
}

impl From<rishield::scenario::ScenarioError> for CliError {
    fn from(e: rishield::scenario::ScenarioError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<rishield::optimizer::SolverError> for CliError {
    fn from(e: rishield::optimizer::SolverError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<rishield::channel::ChannelError> for CliError {
    fn from(e: rishield::channel::ChannelError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<rishield::ris::RisError> for CliError {
    fn from(e: rishield::ris::RisError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<rishield::raytracer::TraceError> for CliError {
    fn from(e: rishield::raytracer::TraceError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<rishield::pattern::PatternError> for CliError {
    fn from(e: rishield::pattern::PatternError) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "rishield", version, about = "RIS electromagnetic-shielding toolkit")]
struct Cli {
    /// Master seed for channel synthesis and the solver.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for parallel sections (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Directory for output files (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace a coverage map of the scenario, with the panel off or shielding.
    Simulate(simulate::SimulateArgs),
    /// Solve the shield problem for the scenario's protected receivers.
    Optimize(optimize::OptimizeArgs),
    /// Radiation cut, lobe table and optional 2D map of a panel mask.
    Pattern(pattern_cmd::PatternArgs),
    /// Run the optimizer over a range of channel seeds and aggregate.
    Sweep(sweep::SweepArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.jobs > 0 {
        // Ignore the error if a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    std::fs::create_dir_all(&cli.out_dir)?;
    match &cli.command {
        Command::Simulate(args) => simulate::run(args, cli.seed, &cli.out_dir),
        Command::Optimize(args) => optimize::run(args, cli.seed, &cli.out_dir),
        Command::Pattern(args) => pattern_cmd::run(args, cli.seed, &cli.out_dir),
        Command::Sweep(args) => sweep::run(args, cli.seed, &cli.out_dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RISHIELD_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
