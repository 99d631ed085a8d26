//! `wasser-dual <command> --config <file.toml>`
//!
//! Exit status: 0 when every check passes, 1 on invalid input or I/O
//! failure, 2 when a computed invariant exceeds its tolerance.

#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Parser;

use config::{Command, ExperimentConfig};
use output::OutputDir;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] wasser_dual::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Parser)]
#[command(
    name = "wasser-dual",
    version,
    about = "Wasserstein contraction and gradient duality experiments"
)]
struct Cli {
    /// One of wasserstein, hopf-lax, check-duality, simulate-heisenberg, audit.
    command: String,
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// `key=value` patch applied to the config, e.g. `kernel.t=0.02`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

enum Outcome {
    Passed,
    Failed(Vec<String>),
}

fn threads() -> Result<usize, CliError> {
    let requested = match std::env::var("WASSER_DUAL_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Input(format!("WASSER_DUAL_THREADS: `{v}` is not a thread count")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(requested)
        .build_global()
        .map_err(|e| CliError::Input(format!("WASSER_DUAL_THREADS: {e}")))?;
    Ok(rayon::current_num_threads())
}

fn manifest(command: Command, cfg: &ExperimentConfig, threads: usize) -> Result<Vec<u8>, CliError> {
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut doc = toml::Table::new();
    let mut run = toml::Table::new();
    run.insert("command".into(), command.name().into());
    run.insert("created_unix".into(), toml::Value::Integer(created as i64));
    run.insert("threads".into(), toml::Value::Integer(threads as i64));
    doc.insert("run".into(), run.into());
    let mut versions = toml::Table::new();
    versions.insert("wasser-dual".into(), env!("CARGO_PKG_VERSION").into());
    doc.insert("versions".into(), versions.into());
    let config = toml::Value::try_from(cfg).map_err(|e| CliError::Input(format!("manifest: {e}")))?;
    doc.insert("config".into(), config);
    let text = toml::to_string(&doc).map_err(|e| CliError::Input(format!("manifest: {e}")))?;
    Ok(text.into_bytes())
}

fn execute(cli: Cli) -> Result<Outcome, CliError> {
    let command = Command::parse(&cli.command)?;
    let mut cfg = ExperimentConfig::load(&cli.config, &cli.overrides)?;
    if let Some(c) = &cfg.command {
        if Command::parse(c)? != command {
            return Err(CliError::Input(format!(
                "command: config is for `{c}` but `{command}` was requested"
            )));
        }
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(out) = cli.out {
        cfg.out = Some(out);
    }
    let threads = threads()?;
    let out = OutputDir::create(cfg.out.as_deref().unwrap_or("out".as_ref()))?;

    let checks = commands::run(command, &cfg, &out)?;
    out.write_table("checks.csv", &checks.table())?;
    out.write_bytes("manifest.toml", &manifest(command, &cfg, threads)?)?;

    let failures = checks.failures();
    if failures.is_empty() {
        Ok(Outcome::Passed)
    } else {
        Ok(Outcome::Failed(
            failures
                .iter()
                .map(|c| {
                    format!(
                        "check failed: {} in {} (value {}, tolerance {})",
                        c.name,
                        c.table,
                        output::num(c.value),
                        output::num(c.tolerance)
                    )
                })
                .collect(),
        ))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(Outcome::Passed) => ExitCode::SUCCESS,
        Ok(Outcome::Failed(msgs)) => {
            for m in msgs {
                eprintln!("{m}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!(
                "error: {}",
                msg.lines().map(str::trim).collect::<Vec<_>>().join(" ")
            );
            ExitCode::from(1)
        }
    }
}
