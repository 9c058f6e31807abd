//! Command-line front end: `estimate`, `run` and `sweep` over one config.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use drmdp::config::RunConfig;
use drmdp::pipeline::{cmd_estimate, cmd_run, cmd_sweep};

#[derive(Parser)]
#[command(
    name = "drmdp",
    about = "Privacy-preserving dispatch of electric load ensembles",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Path to the JSON run configuration.
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the default transition matrix and state space.
    Estimate,
    /// Full pipeline: solve, privatize, simulate the event, write the bundle.
    Run,
    /// Sweep the concentration grid for every method; write cost-vs-k data.
    Sweep,
}

fn execute(cli: &Cli) -> drmdp::Result<Vec<String>> {
    let mut config = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    match cli.command {
        Command::Estimate => Ok(cmd_estimate(&config)?.lines()),
        Command::Run => Ok(cmd_run(&config)?.lines()),
        Command::Sweep => Ok(cmd_sweep(&config)?.lines()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
