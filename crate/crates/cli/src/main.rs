mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{Failure, Report};
use crate::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "laguerre", version, about = "Heat and Poisson kernel experiments for Laguerre-type operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override one key; repeatable and applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Heat and Poisson kernels on a grid, against the series and Φ (CSV).
    Kernel,
    /// Pointwise convergence of P_t f and e^{-tL} f as t → 0 (CSV).
    Converge,
    /// Weight constructions, class memberships and boundedness sweeps (JSON).
    Weights,
    /// Transference relations between the Laguerre systems (CSV).
    Transfer,
}

fn run(cli: &Cli) -> Result<Report, Failure> {
    let text = match &cli.config {
        Some(path) => Some(
            std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?,
        ),
        None => None,
    };
    let cfg = ExperimentConfig::resolve(text.as_deref(), &cli.set, cli.seed)?;
    match cli.command {
        Command::Kernel => commands::kernel(&cfg),
        Command::Converge => commands::converge(&cfg),
        Command::Weights => commands::weights(&cfg),
        Command::Transfer => commands::transfer(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            let written = match &cli.out {
                Some(path) => std::fs::write(path, &report.text),
                None => {
                    print!("{}", report.text);
                    Ok(())
                }
            };
            if let Err(e) = written {
                eprintln!("error: cannot write report: {e}");
                return ExitCode::from(2);
            }
            if report.pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("pass rule not met");
                ExitCode::from(1)
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
