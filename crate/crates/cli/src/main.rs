use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use repligame_cli::{parse_config, run_experiment};

#[derive(Parser)]
#[command(
    name = "repligame",
    version,
    about = "Replicator dynamics and mean-field-game experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a scenario file.
    Run {
        /// Scenario file (see `configs/` for examples).
        config: PathBuf,
    },
}

fn thread_count() -> Result<Option<usize>, String> {
    match std::env::var("REPLIGAME_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!(
                "REPLIGAME_THREADS must be a positive integer, got `{v}`"
            )),
        },
    }
}

fn main() -> ExitCode {
    let Command::Run { config } = Cli::parse().command;
    let threads = match thread_count() {
        Ok(n) => n,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    };

    let text = match std::fs::read_to_string(&config) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(1);
        }
    };
    let cfg = match parse_config(&text) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run_experiment(&cfg)) {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        // stability violations print the violated inequality through their message
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
