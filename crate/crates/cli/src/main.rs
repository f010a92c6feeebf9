use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod plots;

use config::Config;

pub const OUT_ENV: &str = "QUADNMPC_OUT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

/// Nonlinear MPC for a small quadrotor: closed-loop simulation, trajectory
/// generation, solver benchmarks and parameter studies.
#[derive(Debug, Parser)]
#[command(name = "quadnmpc", version)]
struct Cli {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set delay.lambda=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory (default `$QUADNMPC_OUT/<command>` or `out/<command>`).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one closed-loop simulation.
    Simulate,
    /// Time the RTI cycle over horizons and QP solvers.
    Benchmark,
    /// Generate a reference trajectory CSV.
    Trajgen {
        #[arg(value_enum)]
        kind: TrajKind,
    },
    /// Run a batch of simulations and check the expected trends.
    Study {
        #[arg(value_enum)]
        name: StudyName,
    },
    /// Print the effective configuration.
    Config,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrajKind {
    SmoothStep,
    Helix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StudyName {
    Horizon,
    Delay,
    Compare,
    Condensing,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = Config::load(cli.config.as_deref(), &cli.overrides)?;
    let out = |sub: &str| commands::output_dir(cli.out.as_deref(), sub);
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, &out("simulate")),
        Command::Benchmark => commands::benchmark(&cfg, &out("benchmark")),
        Command::Trajgen { kind } => {
            let file = match kind {
                TrajKind::SmoothStep => "smooth_step.csv",
                TrajKind::Helix => "helix.csv",
            };
            let path = match &cli.out {
                Some(p) => p.clone(),
                None => out("trajgen").join(file),
            };
            commands::trajgen(&cfg, kind, &path)
        }
        Command::Study { name } => {
            let sub = format!("study_{}", name.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default());
            commands::study(&cfg, name, &out(&sub))
        }
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
