use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use slipflow::config::parse_config;
use slipflow::runner::{execute, validate_config};

#[derive(Parser)]
#[command(
    name = "slipflow",
    about = "Stokes flow with velocity-dependent threshold slip: solvers, \
             shape optimization, and stability experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the task described by a config file.
    Run {
        /// Path to the `key = value` config file.
        config: PathBuf,
        /// Output directory (overrides `out_dir` from the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Random seed (overrides `seed` from the config).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and validate a config file without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, out, seed } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(1);
                }
            };
            let mut cfg = match parse_config(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let out_dir = out.unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
            let status = execute(&cfg, &out_dir);
            match status.message() {
                Some(msg) => eprintln!("{}: {msg}", status.label()),
                None => println!("ok: artifacts in {}", out_dir.display()),
            }
            ExitCode::from(status.exit_code() as u8)
        }
        Command::Validate { config } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(1);
                }
            };
            match validate_config(&text) {
                Ok(cfg) => {
                    println!("ok: valid {} config", cfg.task.name());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
