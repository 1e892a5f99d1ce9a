//! Thin batch CLI over the library: `pacon run --config <file> --out <dir>`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pacon::runner::{run, RunOptions};

#[derive(Parser)]
#[command(
    name = "pacon",
    version,
    about = "Principal-agent contracts in partially observed linear systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config and write CSV/JSON outputs.
    Run {
        /// Experiment config (JSON, versioned, unknown keys rejected).
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Override mc.master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override mc.n_paths.
        #[arg(long)]
        paths: Option<usize>,
        /// Override grid.steps.
        #[arg(long, value_name = "N")]
        grid_steps: Option<usize>,
    },
}

fn worker_threads() -> Result<Option<usize>, String> {
    match std::env::var("PACON_THREADS") {
        Ok(raw) => {
            let n: usize = raw
                .parse()
                .map_err(|_| format!("PACON_THREADS must be a positive integer, got {raw:?}"))?;
            if n == 0 {
                return Err("PACON_THREADS must be >= 1".into());
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run {
        config,
        out,
        seed,
        paths,
        grid_steps,
    } = cli.command;

    let threads = match worker_threads() {
        Ok(t) => t,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };

    let options = RunOptions {
        config_path: config,
        out_dir: out,
        seed,
        paths,
        grid_steps,
        threads,
    };
    match run(&options) {
        Ok(summary) => {
            println!(
                "{} mode {}: {}",
                summary.mode,
                if summary.pass { "PASS" } else { "FAIL" },
                summary
                    .files
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
