//! `krotov <mode> --config <path> [--out <dir>] [--paper-scale]`

mod config;
mod error;
mod modes;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{Mode, RunConfig};
use error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "krotov", version, about = "Lindblad propagation and Krotov optimization runs")]
struct Args {
    /// Run mode.
    #[arg(value_enum)]
    mode: Mode,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the full-size optomechanical parameter set instead of the config's.
    #[arg(long)]
    paper_scale: bool,
}

fn run(args: Args) -> CliResult<()> {
    let cfg = RunConfig::load(&args.config, args.mode, args.out, args.paper_scale)?;
    modes::Context::new(cfg)?.run()
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("krotov: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
