use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stochgame::presets;
use stochgame_cli::{load, run_document, validate_document, RunOptions, EXIT_USAGE};

/// Experiments on two-player zero-sum stochastic differential games.
#[derive(Parser)]
#[command(name = "stochgame", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage of a configuration and write its artifacts.
    Run {
        config: PathBuf,
        /// Output directory (overrides the configured one).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Treat inconclusive verdicts as failures.
        #[arg(long)]
        strict: bool,
        /// Number of worker threads.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        threads: Option<u32>,
    },
    /// List the shipped problem presets.
    ListPresets,
    /// Parse and validate a configuration without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::ListPresets => {
            for (name, description) in presets::describe() {
                println!("{name:<16} {description}");
            }
            0
        }
        Command::Validate { config } => match load(&config).and_then(|doc| validate_document(&doc))
        {
            Ok(precision) => {
                println!("{}: valid ({precision:?})", config.display());
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_USAGE
            }
        },
        Command::Run {
            config,
            out,
            strict,
            threads,
        } => {
            let opts = RunOptions {
                out,
                strict,
                threads: threads.map(|n| n as usize),
            };
            match load(&config).and_then(|doc| run_document(&doc, &opts)) {
                Ok(outcome) => {
                    for s in &outcome.manifest.stages {
                        let verdict = s
                            .verdict
                            .map(|v| v.to_string())
                            .unwrap_or_else(|| "-".into());
                        match &s.error {
                            Some(e) => eprintln!("[{:02}] {:<18} error: {e}", s.index, s.stage),
                            None => println!(
                                "[{:02}] {:<18} {:?} {verdict} ({:.2} s)",
                                s.index, s.stage, s.status, s.wall_time_s
                            ),
                        }
                    }
                    println!("artifacts in {}", outcome.out_dir.display());
                    outcome.exit_status()
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_USAGE
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
