use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "g2lab", version, about = "Γ-calculus verification lab")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites of a config and write report.csv and summary.txt
    Run { config: PathBuf },
    /// Write a gnuplot script for a report.csv
    Plots { report: PathBuf },
    /// Parse and validate a config without running it
    Validate { config: PathBuf },
}

fn main() {
    let args = Args::parse();
    let code = match args.command {
        Command::Run { config } => g2lab::cli::run_command(&config),
        Command::Plots { report } => g2lab::cli::plots_command(&report),
        Command::Validate { config } => g2lab::cli::validate_command(&config),
    };
    std::process::exit(code);
}
