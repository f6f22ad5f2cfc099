use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "saddle",
    version,
    about = "Benchmark harness for bilinearly coupled saddle-point solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured (instance, solver) pair; writes one CSV trace
    /// per run plus a JSON summary into the configured output directory.
    Run {
        /// TOML experiment configuration.
        config: PathBuf,
    },
    /// Re-run the scheduled solvers with Lyapunov tracking and check the
    /// contraction and sandwich certificates at every iteration.
    Verify {
        /// TOML experiment configuration.
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => saddle_cli::run_experiment(&config),
        Command::Verify { config } => saddle_cli::verify_certificates(&config),
    };
    ExitCode::from(code as u8)
}
