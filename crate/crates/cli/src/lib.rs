//! Command-line workflows: simulate, estimate, compare and report.

pub mod commands;
pub mod config;

use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use rapsnav::NavError;

pub use commands::{cmd_compare, cmd_estimate, cmd_report, cmd_simulate, CompareReport, EstimateReport};
pub use config::{DatasetFiles, RunConfig};

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "rapsnav", version, about = "RTK GNSS/INS estimation with risk-averse measurement selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scenario and write it as CSV files.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run estimators on one dataset and write trajectories and diagnostics.
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        est: EstimatorArgs,
        /// Report the share of epochs whose NEES lies in the 95% band.
        #[arg(long)]
        nees: bool,
    },
    /// Monte Carlo comparison of estimators on identical inputs.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        est: EstimatorArgs,
        /// Number of Monte Carlo runs.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Plot-ready CSVs from trajectory files.
    Report {
        /// Trajectory CSVs written by `estimate`.
        #[arg(required = true)]
        trajectories: Vec<PathBuf>,
        /// Truth CSV; enables the error and CDF outputs.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration value, e.g. `scenario.duration=120`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Scenario preset: open-sky, urban, urban-small or zero-noise.
    #[arg(long)]
    pub preset: Option<String>,
    /// Seed; Monte Carlo runs derive their own seeds from it [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct EstimatorArgs {
    /// `dataset.json` of a recorded or previously simulated run.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    /// Slack penalty of the selection problem [default: 50].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Innovation gate of the threshold baseline, in sigmas [default: 2].
    #[arg(long)]
    pub td_lambda: Option<f64>,
    /// `lane-level-paper` or `custom:<path>` [default: lane-level-paper].
    #[arg(long)]
    pub spec: Option<String>,
    /// Elevation cutoff applied by the filter [default: 10].
    #[arg(long)]
    pub elev_cutoff_deg: Option<f64>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

/// Loads the configuration and applies command-line flags on top.
pub fn resolve_config(common: &CommonArgs, est: Option<&EstimatorArgs>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref(), common.preset.as_deref(), &common.set)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output = Some(out.clone());
    }
    if let Some(jobs) = common.jobs {
        cfg.jobs = jobs;
    }
    if let Some(est) = est {
        if let Some(path) = &est.dataset {
            cfg.dataset = Some(DatasetFiles::load(path)?);
        }
        if !est.methods.is_empty() {
            cfg.methods = est.methods.clone();
        }
        if let Some(g) = est.gamma {
            cfg.estimator.gamma = g;
        }
        if let Some(l) = est.td_lambda {
            cfg.estimator.td_lambda = l;
        }
        if let Some(s) = &est.spec {
            cfg.estimator.spec = config::parse_spec(s)?;
        }
        if let Some(e) = est.elev_cutoff_deg {
            cfg.filter.elev_cutoff_deg = e;
        }
    }
    cfg.prepare()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg = resolve_config(&common, None)?;
            emit(&commands::manifest_text(&cmd_simulate(&cfg)?))?;
        }
        Command::Estimate { common, est, nees } => {
            let cfg = resolve_config(&common, Some(&est))?;
            let report = cmd_estimate(&cfg, nees)?;
            if est.json {
                emit(&format!("{}\n", serde_json::to_string_pretty(&report)?))?;
            } else {
                let mut text = commands::manifest_text(&report.files);
                if !report.summary.is_empty() {
                    text += &format!("\n{}", report.to_text());
                }
                emit(&text)?;
            }
        }
        Command::Compare { common, est, runs } => {
            let mut cfg = resolve_config(&common, Some(&est))?;
            if let Some(r) = runs {
                cfg.runs = r;
                cfg.prepare()?;
            }
            let report = cmd_compare(&cfg)?;
            if let Some(dir) = &cfg.output {
                commands::write_compare(dir, &report)?;
            }
            if est.json {
                emit(&report.to_json()?)?;
            } else {
                emit(&report.to_text())?;
            }
        }
        Command::Report { trajectories, truth, out } => {
            emit(&commands::manifest_text(&cmd_report(&trajectories, truth.as_deref(), &out)?))?;
        }
    }
    Ok(())
}

/// Writes to stdout; a reader that closed the pipe early is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(NavError::from(e).into()),
        _ => Ok(()),
    }
}

/// 2 for bad input, 3 for numerical failure.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<NavError>()) {
        Some(e) if !e.is_validation() => EXIT_NUMERICAL,
        _ => EXIT_VALIDATION,
    }
}
