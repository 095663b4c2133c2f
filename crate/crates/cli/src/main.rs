//! `qqual`: experiment runner. Each command writes ledger.csv, report.md,
//! figures and resolved_config.json into its run directory.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use commands::{Failure, RunDir};
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "qqual",
    version,
    about = "Paired classical/quantum network benchmarks and the quantum qualifier"
)]
struct Cli {
    /// JSON config with one block per command; missing keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the base seed of every block.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory (default: runs/<command>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classification benchmark and four-factor table.
    BenchClass,
    /// Regression grid over target functions and noise levels.
    BenchReg,
    /// Characterize datasets and evaluate or refit the qualifier.
    Qualify,
    /// DVCS pseudodata campaign and regime maps.
    Dvcs,
    /// Check a DVCS data file (or the bundled corpus) against the schema
    /// and the experiments' kinematic envelopes.
    ValidateData {
        path: Option<PathBuf>,
        /// Also require the published per-experiment point counts.
        #[arg(long)]
        full: bool,
    },
    /// Write the bundled and generated datasets as CSV.
    GenData,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::BenchClass => "bench-class",
            Command::BenchReg => "bench-reg",
            Command::Qualify => "qualify",
            Command::Dvcs => "dvcs",
            Command::ValidateData { .. } => "validate-data",
            Command::GenData => "gen-data",
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("QQUAL_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::Config(format!(
            "QQUAL_THREADS must be a positive integer, got '{v}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(e.into()))
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        None => RunConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            RunConfig::from_json(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
    };
    if let Some(s) = cli.seed {
        cfg.override_seed(s);
    }
    cfg.validate().map_err(Failure::Config)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    let cfg = load_config(&cli)?;
    if let Command::ValidateData { path, full } = &cli.command {
        return commands::validate_data(path.as_deref(), *full);
    }
    let dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(cli.command.name()));
    let out = RunDir::create(&dir)?;
    match cli.command {
        Command::BenchClass => commands::bench_class(&cfg, &out),
        Command::BenchReg => commands::bench_reg(&cfg, &out),
        Command::Qualify => commands::qualify(&cfg, &out),
        Command::Dvcs => commands::dvcs(&cfg, &out),
        Command::GenData => commands::gen_data(&cfg, &out),
        Command::ValidateData { .. } => unreachable!(),
    }?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            error!("{f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
