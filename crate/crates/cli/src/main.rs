//! `hjmp`: solve reachability grids, train value networks, validate them
//! against an oracle, run planning benchmarks and export plot data.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 for runtime
//! faults, 4 when a resource cap refuses the job.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "hjmp", version, about = "Reachability-based multi-agent motion planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config for the subcommand, or a manifest from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Defaults to all cores for bench and solve-grid, one
    /// for the rest.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Single worker, no wall-clock timeouts, zeroed timing columns.
    #[arg(long, global = true)]
    deterministic: bool,
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve the HJI equation on a grid.
    SolveGrid,
    /// Train value networks.
    Train,
    /// Compare a network against a grid solution.
    EvalValue,
    /// Run the multi-agent planning benchmark.
    Bench,
    /// Turn traces and value slices into CSV.
    Plot,
}

pub struct Global {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub workers: usize,
    pub deterministic: bool,
    pub verbose: bool,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    Resource(String),
}

impl From<hjmp_core::Error> for CliError {
    fn from(e: hjmp_core::Error) -> Self {
        use hjmp_core::Error as E;
        match e {
            E::InvalidInput(_) | E::SystemMismatch(_) | E::MalformedHeader(_) | E::ShapeMismatch(_) | E::TruncatedBlob { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Resource(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) | CliError::Resource(m) => m,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = cli.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let out = cli.out.ok_or_else(|| CliError::Config("--out is required".into()))?;
    if !config.is_file() {
        return Err(CliError::Config(format!("config {} does not exist", config.display())));
    }
    std::fs::create_dir_all(&out).map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
    let parallel_default = matches!(cli.command, Command::Bench | Command::SolveGrid);
    let workers = if cli.deterministic {
        1
    } else {
        cli.workers.unwrap_or_else(|| {
            if parallel_default {
                std::thread::available_parallelism().map_or(1, |n| n.get())
            } else {
                1
            }
        })
    };
    if workers == 0 {
        return Err(CliError::Config("--workers must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let g = Global { config, out, seed: cli.seed, workers, deterministic: cli.deterministic, verbose: cli.verbose };
    match cli.command {
        Command::SolveGrid => commands::solve_grid(&g),
        Command::Train => commands::train_cmd(&g),
        Command::EvalValue => commands::eval_value(&g),
        Command::Bench => commands::bench(&g),
        Command::Plot => commands::plot(&g),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
