//! Library surface of the benchmark harness, exposed so integration tests
//! can drive the same entry points as the binary.

pub mod config;
pub mod runner;

use std::path::Path;

/// Runs the configured experiments; returns the process exit code
/// (0 success, 1 config error, 2 internal error).
pub fn run_experiment(config_path: &Path) -> i32 {
    match runner::run_experiment(config_path) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Verifies the Lyapunov certificates for the configured runs; returns the
/// process exit code (0 when every run certifies).
pub fn verify_certificates(config_path: &Path) -> i32 {
    match runner::verify_certificates(config_path) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
