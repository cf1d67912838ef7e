//! `quantcon` — rate-allocation planner and Monte-Carlo harness for
//! quantized distributed average consensus.
//!
//! One JSON config document drives five subcommands: `gen-graph` draws the
//! topology, `tmin` scans the minimum feasible horizon, `optimize` solves
//! the rate-allocation program, `simulate` validates a solved schedule
//! against seeded Monte-Carlo runs, and `sweep` tabulates the
//! rate-distortion trade-off across graph realizations.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on a configuration
//! error (reported with the offending field's path).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use commands::{OptimizeOverrides, Scale};
use config::{ConfigError, ConstraintChoice, ExperimentConfig, ModeChoice};
use output::{ensure_dir, RunMeta};

#[derive(Parser)]
#[command(
    name = "quantcon",
    version,
    about = "Plan and measure rate-optimal quantization schedules for distributed averaging"
)]
struct Cli {
    /// Experiment configuration document (JSON).
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,

    /// Output directory (overrides the config's `output`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for Monte-Carlo trials (default: all cores).
    /// Results are bit-identical regardless of this setting.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Run at full protocol scale: 32 graph realizations, L = 10000
    /// coordinates, 1000 trials (instead of the desk-scale 8/1000/100).
    #[arg(long, global = true)]
    full_scale: bool,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw the configured graph, print its size and spectral gap, and
    /// write it as JSON.
    GenGraph,
    /// For each MSE target, find the smallest horizon whose lossless MSE
    /// beats it.
    Tmin {
        /// Scan a single absolute MSE target instead of the configured list.
        #[arg(long)]
        mse_target: Option<f64>,
    },
    /// Solve the rate-allocation program for each MSE target; write
    /// per-slot rate tables and solver reports.
    Optimize {
        /// Distortion-schedule granularity (overrides the config).
        #[arg(long, value_enum)]
        mode: Option<ModeChoice>,
        /// Which MSE budget to enforce (overrides the config).
        #[arg(long, value_enum)]
        constraint: Option<ConstraintChoice>,
        /// Solve a single absolute MSE target instead of the configured list.
        #[arg(long)]
        mse_target: Option<f64>,
        /// Solver tolerance (overrides the config).
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Optimize, then Monte-Carlo simulate each schedule with the
    /// configured quantizer and compare against predictions.
    Simulate {
        #[arg(long, value_enum)]
        mode: Option<ModeChoice>,
        #[arg(long)]
        mse_target: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Solve + simulate across (radius, graph realization, target) and
    /// tabulate the rate-distortion trade-off with per-setting averages.
    Sweep,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(cfg_err) = e.downcast_ref::<ConfigError>() {
                eprintln!("{cfg_err}");
                ExitCode::from(2)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker thread pool")?;
    }
    let cfg = ExperimentConfig::load(&cli.config)?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.clone());
    ensure_dir(&out)?;
    let scale = Scale { full: cli.full_scale };

    let command_name: &str;
    match cli.command {
        Cmd::GenGraph => {
            command_name = "gen-graph";
            commands::cmd_gen_graph(&cfg, &out)?;
        }
        Cmd::Tmin { mse_target } => {
            command_name = "tmin";
            commands::cmd_tmin(&cfg, &out, mse_target)?;
        }
        Cmd::Optimize { mode, constraint, mse_target, tol } => {
            command_name = "optimize";
            let ov = OptimizeOverrides { mode, constraint, mse_target, tol };
            commands::cmd_optimize(&cfg, &out, ov)?;
        }
        Cmd::Simulate { mode, mse_target, tol } => {
            command_name = "simulate";
            let ov = OptimizeOverrides { mode, constraint: None, mse_target, tol };
            commands::cmd_simulate(&cfg, &out, ov, scale)?;
        }
        Cmd::Sweep => {
            command_name = "sweep";
            commands::cmd_sweep(&cfg, &out, scale)?;
        }
    }
    RunMeta::new(command_name, cli.threads, cli.full_scale).write(&out)?;
    Ok(())
}
