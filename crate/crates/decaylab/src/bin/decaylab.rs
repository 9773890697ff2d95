use clap::{Args, Parser, Subcommand};
use decaylab::config::parse_config;
use std::path::PathBuf;
use std::process::ExitCode;

/// Pseudo-spectral decay laboratory for coupled dissipative systems.
#[derive(Parser)]
#[command(name = "decaylab", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file (sectioned key = value text).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (one subdirectory per experiment).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overwrite an existing non-empty experiment directory.
    #[arg(long)]
    force: bool,
    /// Concurrent sweep children.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate and write norm tracks and checkpoints.
    Run(Common),
    /// Run the requested verification checks and write reports.
    Verify(Common),
    /// Evaluate the constants tables over the configured grids.
    Constants(Common),
    /// Fan out runs over a parameter sweep.
    Sweep(Common),
}

fn dispatch(cmd: &Cmd) -> decaylab::Result<bool> {
    let common = match cmd {
        Cmd::Run(c) | Cmd::Verify(c) | Cmd::Constants(c) | Cmd::Sweep(c) => c,
    };
    let spec = parse_config(&common.config)?;
    match cmd {
        Cmd::Run(_) => {
            decaylab::cli::cmd_run(&spec, &common.out, common.force)?;
            Ok(true)
        }
        Cmd::Verify(_) => {
            let bundle = decaylab::cli::cmd_verify(&spec, &common.out, common.force)?;
            Ok(bundle.all_pass())
        }
        Cmd::Constants(_) => {
            decaylab::cli::cmd_constants(&spec, &common.out, common.force)?;
            Ok(true)
        }
        Cmd::Sweep(_) => {
            decaylab::cli::cmd_sweep(&spec, &common.out, common.force, common.workers)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
