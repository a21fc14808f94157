//! Experiment runner behind the `g2lab` binary.

pub mod config;
pub mod plots;
pub mod runner;

use std::path::Path;

pub use config::{
    ConfigError, CurvatureSetting, ExperimentConfig, InitialMeasure, SpaceConfig, Suite,
};
pub use plots::{emit_plots, PlotError};
pub use runner::{output_dir, run, write_outputs, RunOutcome, SuiteOutcome, OUTPUT_ENV};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// `g2lab run`: returns the process exit code.
pub fn run_command(config_path: &Path) -> i32 {
    let config = match ExperimentConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let outcome = run(&config);
    let dir = output_dir(&config);
    if let Err(e) = write_outputs(&outcome, &dir) {
        eprintln!("cannot write outputs to {}: {e}", dir.display());
        return EXIT_FAIL;
    }
    print!("{}", outcome.summary());
    outcome.exit_code()
}

/// `g2lab validate`.
pub fn validate_command(config_path: &Path) -> i32 {
    match ExperimentConfig::load(config_path) {
        Ok(c) => {
            let names: Vec<&str> = c.suites.iter().map(|s| s.name()).collect();
            println!("ok: suites {}", names.join(", "));
            EXIT_PASS
        }
        Err(e) => {
            eprintln!("config error: {e}");
            EXIT_CONFIG
        }
    }
}

/// `g2lab plots`: writes `plots.gp` beside the report.
pub fn plots_command(report_path: &Path) -> i32 {
    match emit_plots(report_path) {
        Ok(script) => {
            let target = report_path.with_file_name("plots.gp");
            if let Err(e) = std::fs::write(&target, script) {
                eprintln!("cannot write {}: {e}", target.display());
                return EXIT_FAIL;
            }
            println!("{}", target.display());
            EXIT_PASS
        }
        Err(e @ PlotError::MalformedReport { .. }) => {
            eprintln!("{e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("{e}");
            EXIT_FAIL
        }
    }
}
