use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use spectral_transport_core::harness::experiments::{
    run_bound_audit, run_diagnose, run_envelope, run_phase_simulation, run_rate_experiment,
};
use spectral_transport_core::harness::io::{emit_csv, emit_json_summary, version_string, CsvRecord, RunSummary};
use spectral_transport_core::harness::ExperimentConfig;
use spectral_transport_core::Result;

#[derive(Parser)]
#[command(name = "spectral-transport", version, about = "Transported minimal interpolation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Phase simulation over the regime presets.
    Simulate(Common),
    /// Rate experiment: risk of the minimal interpolator along n.
    Ratefit(Common),
    /// Monte Carlo risk against the finite-sample bound.
    Audit(Common),
    /// Empirical surrogate on generated or ingested data.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Matrix file (d feature columns, then the response).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Deterministic envelope calculus.
    Envelope(Common),
}

fn prepare(common: &Common) -> Result<ExperimentConfig> {
    if let Some(t) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| spectral_transport_core::Error::Config(format!("threads: {e}")))?;
    }
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn finish<R: CsvRecord, E: Serialize>(
    name: &str,
    cfg: &ExperimentConfig,
    records: &[R],
    results: E,
    start: Instant,
) -> Result<PathBuf> {
    let csv_path = cfg.output_dir.join(format!("{name}.csv"));
    emit_csv(records, &csv_path)?;
    let summary = RunSummary {
        command: name,
        version: version_string(),
        config: cfg,
        seeds: json!({ "master": cfg.seed }),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        results,
    };
    emit_json_summary(&summary, &cfg.output_dir.join(format!("{name}_summary.json")))?;
    Ok(csv_path)
}

fn run(cli: Cli) -> Result<PathBuf> {
    let start = Instant::now();
    match cli.command {
        Command::Simulate(c) => {
            let cfg = prepare(&c)?;
            let rep = run_phase_simulation(&cfg)?;
            finish("simulate", &cfg, &rep.records, &rep, start)
        }
        Command::Ratefit(c) => {
            let cfg = prepare(&c)?;
            let rep = run_rate_experiment(&cfg)?;
            let results = json!({
                "cells": rep.cells,
                "slope": rep.slope,
                "planned_loads": rep.planned_loads,
                "measured_loads": rep.measured_loads,
            });
            finish("ratefit", &cfg, &rep.records, results, start)
        }
        Command::Audit(c) => {
            let cfg = prepare(&c)?;
            let rep = run_bound_audit(&cfg)?;
            finish("audit", &cfg, &rep.records, &rep, start)
        }
        Command::Diagnose { common, data } => {
            let cfg = prepare(&common)?;
            let rep = run_diagnose(&cfg, data.as_deref())?;
            finish("diagnose", &cfg, &rep.records, &rep, start)
        }
        Command::Envelope(c) => {
            let cfg = prepare(&c)?;
            let rep = run_envelope(&cfg)?;
            finish("envelope", &cfg, &rep.records, &rep, start)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(path) => {
            println!("wrote {}", Path::new(&path).display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
