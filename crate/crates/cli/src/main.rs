//! inertdrift: batch experiment driver for the inert-drift simulation
//! toolkit.
//!
//! Usage: inertdrift <command> --config <file> [--seed N] [--workers K] [--out DIR]
//!
//! The command must match the config's `[run] command`. `workers` is the
//! number of noise streams and is part of the reproducibility key; the
//! INERTDRIFT_THREADS environment variable only caps OS threads and never
//! changes results.
//!
//! Exit codes: 0 ok, 2 config error, 3 numeric/abort-budget failure.

mod config;
mod report;
mod runner;

use config::{Command, ExperimentConfig};
use report::ErrorRecord;
use std::path::PathBuf;
use std::process::ExitCode;

struct CliArgs {
    command: String,
    config_path: PathBuf,
    seed: Option<u64>,
    workers: Option<u64>,
    out: Option<String>,
}

fn usage() -> String {
    "usage: inertdrift <command> --config <file> [--seed N] [--workers K] [--out DIR]\n\
     commands: simulate cycles stationary tails fluctuations lln ergodicity bounds oracle convergence"
        .to_string()
}

fn parse_cli(mut args: impl Iterator<Item = String>) -> Result<CliArgs, String> {
    let command = args.next().ok_or_else(usage)?;
    let mut config_path = None;
    let mut seed = None;
    let mut workers = None;
    let mut out = None;
    while let Some(flag) = args.next() {
        let mut value = || args.next().ok_or_else(|| format!("{flag} needs a value"));
        match flag.as_str() {
            "--config" => config_path = Some(PathBuf::from(value()?)),
            "--seed" => {
                seed = Some(value()?.parse().map_err(|e| format!("--seed: {e}"))?);
            }
            "--workers" => {
                workers = Some(value()?.parse().map_err(|e| format!("--workers: {e}"))?);
            }
            "--out" => out = Some(value()?),
            other => return Err(format!("unknown flag {other}\n{}", usage())),
        }
    }
    Ok(CliArgs {
        command,
        config_path: config_path.ok_or("--config is required")?,
        seed,
        workers,
        out,
    })
}

fn main() -> ExitCode {
    let cli = match parse_cli(std::env::args().skip(1)) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(2);
        }
    };

    let text = match std::fs::read_to_string(&cli.config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", cli.config_path.display());
            return ExitCode::from(2);
        }
    };
    let mut cfg = match ExperimentConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };

    match Command::parse(&cli.command) {
        Some(c) if c == cfg.command => {}
        Some(c) => {
            eprintln!(
                "config error: CLI command '{}' does not match config command '{}'",
                c.name(),
                cfg.command.name()
            );
            return ExitCode::from(2);
        }
        None => {
            eprintln!("config error: unknown command '{}'\n{}", cli.command, usage());
            return ExitCode::from(2);
        }
    }

    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = cli.workers {
        if workers == 0 {
            eprintln!("config error: --workers must be positive");
            return ExitCode::from(2);
        }
        cfg.workers = workers;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }

    // thread cap only schedules execution; it never changes the partition
    let threads = std::env::var("INERTDRIFT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| {
            (cfg.workers as usize).min(inertdrift_core::lanes::default_threads())
        });

    let out_dir = PathBuf::from(&cfg.out_dir);
    match runner::run(&cfg, threads, &out_dir) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("run failed: {e}");
            report::write_error(
                &out_dir,
                &ErrorRecord { code: 3, kind: error_kind(&e), message: e.to_string() },
            );
            ExitCode::from(3)
        }
    }
}

fn error_kind(e: &runner::RunError) -> String {
    match e {
        runner::RunError::AbortBudget(_) => "abort-budget".into(),
        runner::RunError::Module(_) => "module".into(),
        runner::RunError::Io(_) => "io".into(),
        runner::RunError::Plot(report::PlotError::EmptyMeasure(_)) => "empty-measure".into(),
        runner::RunError::Plot(report::PlotError::MissingArtifacts(_)) => "missing-artifacts".into(),
        runner::RunError::Plot(_) => "plot".into(),
    }
}
