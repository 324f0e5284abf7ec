use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hre_cli::{run_file, Command, Overrides};

/// Runs one experiment described by a TOML file.
#[derive(Debug, Parser)]
#[command(name = "hrelab", version)]
struct Args {
    /// Overrides `command` in the config file.
    #[arg(value_enum)]
    command: Option<Command>,
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed` in the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default `out/<command>`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let result = run_file(
        &args.config,
        Overrides {
            command: args.command,
            seed: args.seed,
            workers: args.workers,
            out: args.out,
        },
    );
    if let Some(dir) = &result.out_dir {
        println!("artifacts in {}", dir.display());
    }
    if let Some(msg) = &result.message {
        eprintln!("{msg}");
    }
    ExitCode::from(result.exit_code as u8)
}
