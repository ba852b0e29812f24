use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use slenderfall::cli::{self, Mode};

/// Steady free fall and sedimentation of slender bodies in a hyperviscous fluid.
#[derive(Parser)]
#[command(name = "slenderfall", version)]
struct Args {
    mode: Mode,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for the report and CSV files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = cli::run(args.mode, &args.config, &args.out);
    ExitCode::from(code as u8)
}
