//! `softcbf` command-line front end: single runs, preset sweeps and safe-set
//! export.

mod report;
mod safeset;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use softcbf::{Integrator, Preset};

#[derive(Debug, Parser)]
#[command(name = "softcbf", version, about = "Force-safe contact simulation for planar soft arms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one closed-loop run and write its trajectory.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Barrier tuning; overrides the config's `[barrier]` table.
        #[arg(long, value_parser = parse_preset)]
        preset: Option<Preset>,
    },
    /// Run the none/low/high presets (or the config's gamma list).
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Run the sweep entries on separate threads.
        #[arg(long)]
        parallel: bool,
    },
    /// Export the no-contact set and the expanded safe set.
    Safeset {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run-configuration TOML file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (default: `[output] dir`, else `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = parse_integrator)]
    pub integrator: Option<Integrator>,
    /// Integration step, s.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Simulated horizon, s.
    #[arg(long)]
    pub duration: Option<f64>,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse()
}

fn parse_integrator(s: &str) -> Result<Integrator, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { common, preset } => simulate::cmd_run(&common, preset),
        Command::Sweep { common, parallel } => simulate::cmd_sweep(&common, parallel),
        Command::Safeset { config, out } => safeset::cmd_safeset(&config, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
