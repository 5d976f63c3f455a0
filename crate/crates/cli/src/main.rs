//! `bathcert` command-line front end.
// `!(x > 0.0)` guards are meant to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "bathcert", version, about = "Certified truncation bounds for chain-mapped bosonic baths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the chain coefficients of the configured mapping.
    ChainCoeffs(Common),
    /// Chain-length bound over the (t, L) sweep.
    SpatialBound(Common),
    /// Fock-truncation error curves and their integrated bound.
    FockBound(Common),
    /// Combined certificate for a single (L, m).
    Certify(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Propagation tolerance; overrides `tolerances.propagation`.
    #[arg(long)]
    tol: Option<f64>,
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(tol) = common.tol {
        if !(tol > 0.0) {
            return Err(CliError::Config(format!("--tol must be > 0, got {tol}")));
        }
        cfg.tol = tol;
    }
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Command::ChainCoeffs(c) => commands::chain_coeffs(&load(&c)?),
        Command::SpatialBound(c) => commands::spatial_bound(&load(&c)?),
        Command::FockBound(c) => commands::fock_bound(&load(&c)?),
        Command::Certify(c) => commands::certify_cmd(&load(&c)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("bathcert: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
