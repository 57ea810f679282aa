//! `ops-sim`: batch runs, baselines, objective scans and benchmarks for the
//! optical pulse stacking environment.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ops_core::Mode;
use serde::{Deserialize, Serialize};

use crate::error::EXIT_OK;

#[derive(Parser, Debug)]
#[command(name = "ops-sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a controller for a number of episodes and log every step.
    Simulate(SimulateArgs),
    /// Write the noiseless energy surface over a 1-D or 2-D delay grid.
    Scan(ScanArgs),
    /// Report the best grid point of a scan without writing the surface.
    Oracle(ScanArgs),
    /// Run controllers over seeds on the test instance and tabulate results.
    Benchmark(BenchmarkArgs),
    /// Print the default environment config for a mode and stage count.
    Preset(PresetArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Run seed; overrides the seed in the config.
    #[arg(long, env = "OPS_SIM_SEED")]
    pub seed: Option<u64>,
    /// Difficulty preset: easy, medium or hard.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// Number of stacking stages.
    #[arg(long)]
    pub stages: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Random,
    Spgd,
    Zero,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Random => "random",
            ControllerKind::Spgd => "spgd",
            ControllerKind::Zero => "zero",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub episodes: u64,
    #[arg(long, value_enum, default_value_t = ControllerKind::Random)]
    pub controller: ControllerKind,
    /// Noise instance to run against.
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    pub split: SplitArg,
    /// JSON file with SPGD gain, probe amplitude and iterations.
    #[arg(long)]
    pub spgd_config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of scanned delays (1 or 2).
    #[arg(long, default_value_t = 1)]
    pub dims: usize,
    /// Half-width of the scan around the optimal delays (ps). Defaults to
    /// five fringes.
    #[arg(long)]
    pub window: Option<f64>,
    /// Grid spacing (ps). Defaults to a twentieth of a fringe.
    #[arg(long)]
    pub step: Option<f64>,
    /// Largest number of grid points to evaluate.
    #[arg(long, default_value_t = ops_core::baselines::DEFAULT_ORACLE_BUDGET)]
    pub budget: usize,
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Episodes per seed.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub episodes: u64,
    /// Controller used when no config file is given.
    #[arg(long, value_enum, default_value_t = ControllerKind::Spgd)]
    pub controller: ControllerKind,
}

#[derive(Args, Debug)]
pub struct PresetArgs {
    #[arg(long, value_parser = parse_mode, default_value = "medium")]
    pub mode: Mode,
    #[arg(long, default_value_t = 2)]
    pub stages: usize,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(&args),
        Command::Scan(args) => commands::scan(&args, true),
        Command::Oracle(args) => commands::scan(&args, false),
        Command::Benchmark(args) => commands::benchmark(&args),
        Command::Preset(args) => commands::preset(&args),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
