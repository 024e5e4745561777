//! Command-line front end. Every subcommand writes its outputs and a
//! `manifest.json` into `--out`; failures print a JSON error object to
//! stderr and exit with status 1.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use cpcox::bootstrap::{BootstrapConfig, Method};
use cpcox::harness::{replay, run_job, ExperimentSpec, Job};
use cpcox::likelihood::ProfileFitConfig;
use cpcox::simulate::ScenarioConfig;

#[derive(Parser)]
#[command(name = "cpcox", version, about = "Change-point Cox regression and bootstrap intervals")]
struct Cli {
    /// Root seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset from a scenario.
    Simulate {
        /// Scenario TOML; defaults to the delayed-effect scenario.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        n: usize,
    },
    /// Fit the change-point model to a dataset.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Change-point search window `LO HI`.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        window: Option<Vec<f64>>,
    },
    /// Bootstrap confidence interval for the change point.
    Bootstrap {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "smooth")]
        method: MethodArg,
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        /// `m = ceil(n^e)` for the m-out-of-n scheme.
        #[arg(long, default_value_t = 0.8)]
        m_exponent: f64,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        window: Option<Vec<f64>>,
    },
    /// Draw from the limit law of the rescaled estimator.
    LimitLaw {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
    },
    /// Monte Carlo coverage study.
    Experiment {
        /// Experiment TOML; defaults to the desk-scale table setup.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the number of Monte Carlo datasets per size.
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Rerun a manifest into `--out` and compare output hashes.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MethodArg {
    Classical,
    MOutOfN,
    Conditional,
    ConditionalCensoring,
    Smooth,
    SmoothCensoring,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Classical => Method::Classical,
            MethodArg::MOutOfN => Method::MOutOfN,
            MethodArg::Conditional => Method::Conditional,
            MethodArg::ConditionalCensoring => Method::ConditionalCensoring,
            MethodArg::Smooth => Method::Smooth,
            MethodArg::SmoothCensoring => Method::SmoothCensoring,
        }
    }
}

fn read_toml<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(toml::from_str(&text).map_err(cpcox::Error::from)?)
}

fn fit_config(window: Option<Vec<f64>>) -> ProfileFitConfig {
    match window.as_deref() {
        Some([lo, hi]) => ProfileFitConfig::with_window(*lo, *hi),
        _ => ProfileFitConfig::default(),
    }
}

fn run(cli: Cli) -> anyhow::Result<serde_json::Value> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let job = match cli.command {
        Command::Replay { manifest } => {
            let report = replay(&manifest, &cli.out)?;
            if !report.all_match() {
                bail!(ReplayMismatch(serde_json::to_value(&report)?));
            }
            return Ok(serde_json::to_value(&report)?);
        }
        Command::Simulate { config, n } => {
            let scenario = match config {
                Some(p) => ScenarioConfig { n, ..read_toml(&p)? },
                None => ScenarioConfig::delayed_effect(n),
            };
            Job::Simulate { scenario, seed: cli.seed }
        }
        Command::Fit { input, window } => {
            Job::fit(&input, fit_config(window)).with_context(|| format!("reading {}", input.display()))?
        }
        Command::Bootstrap {
            input,
            method,
            replicates,
            m_exponent,
            level,
            window,
        } => {
            let method = Method::from(method);
            let mut cfg = BootstrapConfig::new(method, replicates, fit_config(window), cli.seed);
            if method == Method::MOutOfN {
                cfg.m_exponent = m_exponent;
            }
            cfg.confidence_level = level;
            Job::bootstrap(&input, cfg).with_context(|| format!("reading {}", input.display()))?
        }
        Command::LimitLaw { config, draws } => {
            let scenario = match config {
                Some(p) => read_toml(&p)?,
                None => ScenarioConfig::delayed_effect(0),
            };
            Job::limit_law(scenario, draws, cli.seed)
        }
        Command::Experiment { config, reps } => {
            let mut spec = match &config {
                Some(p) => read_toml(p)?,
                None => ExperimentSpec::table_defaults(&cli.out),
            };
            spec.output_dir = cli.out.clone();
            spec.seed = cli.seed;
            if let Some(r) = reps {
                spec.monte_carlo_reps = r;
            }
            Job::Experiment { spec }
        }
    };
    let manifest = run_job(&job, &cli.out)?;
    Ok(serde_json::json!({
        "out": cli.out,
        "outputs": manifest.outputs,
        "failed_cells": manifest.failed_cells,
    }))
}

#[derive(Debug)]
struct ReplayMismatch(serde_json::Value);

impl std::fmt::Display for ReplayMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "replayed outputs differ from the manifest: {}", self.0)
    }
}

impl std::error::Error for ReplayMismatch {}

fn error_json(err: &anyhow::Error) -> serde_json::Value {
    let kind = if let Some(e) = err.downcast_ref::<cpcox::Error>() {
        e.kind()
    } else if err.is::<ReplayMismatch>() {
        "replay_mismatch"
    } else if err.is::<std::io::Error>() {
        "io"
    } else {
        "cli"
    };
    serde_json::json!({ "error": { "kind": kind, "message": format!("{err:#}") } })
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = serde_json::json!({ "error": { "kind": "usage", "message": e.to_string() } });
            eprintln!("{msg}");
            return ExitCode::FAILURE;
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
