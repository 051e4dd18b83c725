//! Experiment driver: `run <config.json>` executes one experiment, `sweep`
//! varies one axis of a base config. Artifacts: manifest.json, metrics/*.csv,
//! checkpoints/*.json.

mod config;
mod experiments;
mod manifest;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use config::{Axis, ExperimentConfig, Kind};
use manifest::Workspace;

#[derive(Parser)]
#[command(name = "latentflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (overrides config.out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        verbose: bool,
    },
    /// Sweep one axis of a base config and emit a rate table.
    Sweep {
        config: PathBuf,
        /// Axis to vary: n, m, t, or steps.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        verbose: bool,
    },
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    // probe the kind first so an unknown kind is distinguishable from other
    // config errors (exit 2 vs 1)
    let probe: serde_json::Value = serde_json::from_str(&text)?;
    if let Some(kind) = probe.get("kind").and_then(|k| k.as_str()) {
        const KNOWN: [&str; 6] = [
            "construct",
            "oracle-check",
            "train-latent",
            "end-to-end",
            "discretization-sweep",
            "rate-sweep",
        ];
        if !KNOWN.contains(&kind) {
            bail!("unknown kind: {kind}");
        }
    }
    Ok(serde_json::from_str(&text)?)
}

fn parse_axis(s: &str) -> Result<Axis> {
    Ok(match s.to_ascii_lowercase().as_str() {
        "n" => Axis::N,
        "m" => Axis::M,
        "t" => Axis::T,
        "steps" => Axis::Steps,
        other => bail!("config.axis: unknown axis {other} (expected n, m, t, or steps)"),
    })
}

fn execute(cfg: &ExperimentConfig, out: Option<PathBuf>, verbose: bool) -> Result<()> {
    cfg.validate()?;
    let out_dir = out
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| anyhow::anyhow!("config.out_dir: required (or pass --out)"))?;
    let mut ws = Workspace::create(&out_dir)?;
    match experiments::dispatch(cfg, &mut ws, verbose) {
        Ok(()) => ws.finish(cfg, false),
        Err(e) => {
            // flag partial artifacts, then surface the original failure
            let _ = ws.finish(cfg, true);
            Err(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, verbose } => {
            load_config(&config).and_then(|cfg| execute(&cfg, out, verbose))
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
            verbose,
        } => load_config(&config).and_then(|mut cfg| {
            cfg.kind = Kind::RateSweep;
            cfg.axis = Some(parse_axis(&axis)?);
            let parsed: Result<Vec<f64>, _> =
                values.split(',').map(|v| v.trim().parse::<f64>()).collect();
            cfg.values = Some(parsed.context("--values: expected comma-separated numbers")?);
            execute(&cfg, out, verbose)
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.to_string().starts_with("unknown kind") {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
