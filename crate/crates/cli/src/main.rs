//! `exitlab`: runs exit-time experiments described by a JSON config.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod plot;
mod run;

use config::LoadedConfig;

#[derive(Parser)]
#[command(
    name = "exitlab",
    version,
    about = "Exit-time experiments on finite Markov generators"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute every command of a config and write reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, overriding the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write SVG charts of sweeps.
        #[arg(long)]
        plots: bool,
    },
    /// Parse a config, build its model and check the form assumptions.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Exit status for malformed configs and bad environment settings.
const CONFIG_ERROR: u8 = 2;

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("EXITLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("EXITLAB_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(CONFIG_ERROR);
    }
    let path = match &cli.command {
        Cmd::Run { config, .. } | Cmd::Validate { config } => config,
    };
    let loaded = match LoadedConfig::load(path) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    match cli.command {
        Cmd::Validate { .. } => validate(&loaded),
        Cmd::Run { out, plots, .. } => {
            let opts = run::RunOptions { out, plots };
            match run::run(&loaded, &opts) {
                Ok(report) => {
                    for c in &report.commands {
                        let status = match (&c.error, c.passed) {
                            (Some(_), _) => "ERROR",
                            (None, true) => "ok",
                            (None, false) => "FAILED",
                        };
                        println!("{:>2} {:<12} {status}", c.index, c.command);
                    }
                    let dir = run::output_dir(&loaded, opts.out.as_deref());
                    println!("reports in {}", dir.display());
                    if report.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    }
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    match e.downcast_ref::<config::ConfigError>() {
                        Some(_) => ExitCode::from(CONFIG_ERROR),
                        None => ExitCode::FAILURE,
                    }
                }
            }
        }
    }
}

fn validate(loaded: &LoadedConfig) -> ExitCode {
    let model = match run::Model::build(loaded) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e:#}");
            return match e.downcast_ref::<config::ConfigError>() {
                Some(_) => ExitCode::from(CONFIG_ERROR),
                None => ExitCode::FAILURE,
            };
        }
    };
    let probe = exitlab_core::forms::lower_bound_estimate(&model.chain)
        + exitlab_core::tol::SECTOR_PROBE_OFFSET;
    let r = exitlab_core::forms::validate_assumption_a(&model.chain, probe);
    println!("config      {}", loaded.path.display());
    println!("hash        {}", loaded.hash());
    println!(
        "model       {} ({} states)",
        loaded.config.model.name(),
        model.chain.n()
    );
    println!("omega       {} states", model.mask.size());
    println!(
        "commands    {}",
        loaded
            .config
            .commands
            .iter()
            .map(|c| c.name())
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!("reversible  {}", model.chain.is_reversible());
    if let Some(l0) = model.lambda0 {
        println!("lambda0     {l0}");
    }
    println!("beta0       {}", r.beta0_estimate);
    println!("sector C    {}", r.sector_constant);
    for v in &r.violations {
        println!("violation   {} ({:e})", v.check, v.magnitude);
    }
    if r.all_ok() {
        println!("valid");
        ExitCode::SUCCESS
    } else {
        println!("assumption checks failed");
        ExitCode::FAILURE
    }
}
