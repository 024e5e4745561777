//! Reproducible jobs: every run writes its outputs and a `manifest.json`
//! holding the resolved job, the numerical settings and the sha256 of each
//! output. [`replay`] reruns a manifest into a fresh directory and compares
//! the hashes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{compute_experiment, write_experiment_files, ExperimentReport, ExperimentSpec, FailedCell};
use crate::bootstrap::{percentile_ci, run_bootstrap, BootstrapConfig, Method, MAX_FAILURE_SHARE};
use crate::error::{Error, Result};
use crate::estimators::{breslow, normal_reference_bandwidth, DEFAULT_GRID_DIVISIONS, DEFAULT_MAX_STRATA};
use crate::io::{load_dataset, save_dataset};
use crate::likelihood::{fit_mple, ProfileFitConfig, TIE_TOLERANCE};
use crate::limit_law::{
    derive_limit_config, sample_limit_batch, write_limit_draws, DEFAULT_QUADRATURE_DIVISIONS,
    MAX_DOUBLINGS,
};
use crate::simulate::{sample_dataset, ScenarioConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    Simulate {
        scenario: ScenarioConfig,
        seed: u64,
    },
    Fit {
        input: PathBuf,
        input_sha256: String,
        fit: ProfileFitConfig,
    },
    Bootstrap {
        input: PathBuf,
        input_sha256: String,
        bootstrap: BootstrapConfig,
    },
    LimitLaw {
        scenario: ScenarioConfig,
        draws: usize,
        seed: u64,
        quadrature_step: f64,
    },
    Experiment {
        spec: ExperimentSpec,
    },
}

impl Job {
    /// Fit job on `input`, hashing the file now so replays can detect edits.
    pub fn fit(input: &Path, fit: ProfileFitConfig) -> Result<Self> {
        Ok(Job::Fit {
            input: input.to_path_buf(),
            input_sha256: sha256_file(input)?,
            fit,
        })
    }

    pub fn bootstrap(input: &Path, bootstrap: BootstrapConfig) -> Result<Self> {
        Ok(Job::Bootstrap {
            input: input.to_path_buf(),
            input_sha256: sha256_file(input)?,
            bootstrap,
        })
    }

    /// Limit-law job with the default quadrature step `tau / 8192`.
    pub fn limit_law(scenario: ScenarioConfig, draws: usize, seed: u64) -> Self {
        let quadrature_step = scenario.tau / DEFAULT_QUADRATURE_DIVISIONS as f64;
        Job::LimitLaw {
            scenario,
            draws,
            seed,
            quadrature_step,
        }
    }

    fn check_input(&self) -> Result<()> {
        if let Job::Fit { input, input_sha256, .. } | Job::Bootstrap { input, input_sha256, .. } = self {
            let actual = sha256_file(input)?;
            if &actual != input_sha256 {
                return Err(Error::InvalidInput(format!(
                    "input {} changed since the manifest was written",
                    input.display()
                )));
            }
        }
        Ok(())
    }
}

/// Numerical constants the outputs depend on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub tie_tolerance: f64,
    pub max_failure_share: f64,
    pub smooth_grid_divisions: usize,
    pub km_max_strata: usize,
    pub bandwidth_rule: String,
    /// Bootstrap refits use the same change-point window as the original fit.
    pub window_in_refits: bool,
    pub limit_quadrature_divisions: usize,
    pub limit_max_doublings: u32,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            tie_tolerance: TIE_TOLERANCE,
            max_failure_share: MAX_FAILURE_SHARE,
            smooth_grid_divisions: DEFAULT_GRID_DIVISIONS,
            km_max_strata: DEFAULT_MAX_STRATA,
            bandwidth_rule: "1.06 * sd(event times) * events^(-1/5)".into(),
            window_in_refits: true,
            limit_quadrature_divisions: DEFAULT_QUADRATURE_DIVISIONS,
            limit_max_doublings: MAX_DOUBLINGS,
        }
    }
}

/// Kernel bandwidth used for one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthRecord {
    pub n: usize,
    pub rep: usize,
    pub data_seed: Option<u64>,
    pub bandwidth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub job: Job,
    pub settings: Settings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bandwidths: Vec<BandwidthRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_cells: Vec<FailedCell>,
    /// File name (relative to the output directory) to sha256.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn create(dir: &Path, name: &str) -> Result<fs::File> {
    Ok(fs::File::create(dir.join(name))?)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn finish(job: &Job, dir: &Path, files: Vec<String>, bandwidths: Vec<BandwidthRecord>, failed: Vec<FailedCell>) -> Result<Manifest> {
    let outputs = files
        .into_iter()
        .map(|f| Ok((f.clone(), sha256_file(&dir.join(&f))?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        job: job.clone(),
        settings: Settings::default(),
        bandwidths,
        failed_cells: failed,
        outputs,
    };
    write_json(dir, MANIFEST_FILE, &manifest)?;
    Ok(manifest)
}

pub(super) fn experiment_to_dir(spec: &ExperimentSpec, dir: &Path) -> Result<(ExperimentReport, Manifest)> {
    spec.validate()?;
    fs::create_dir_all(dir)?;
    let report = compute_experiment(spec)?;
    let files = write_experiment_files(spec, &report, dir)?;
    // one bandwidth per dataset
    let mut bandwidths: Vec<BandwidthRecord> = report
        .records
        .iter()
        .filter_map(|r| {
            r.bandwidth.map(|bandwidth| BandwidthRecord {
                n: r.n,
                rep: r.rep,
                data_seed: Some(r.data_seed),
                bandwidth,
            })
        })
        .collect();
    bandwidths.sort_by_key(|b| (b.n, b.rep));
    bandwidths.dedup_by_key(|b| (b.n, b.rep));
    let job = Job::Experiment { spec: spec.clone() };
    let manifest = finish(&job, dir, files, bandwidths, report.failed_cells.clone())?;
    Ok((report, manifest))
}

/// Run `job`, writing its outputs and `manifest.json` into `dir`.
pub fn run_job(job: &Job, dir: &Path) -> Result<Manifest> {
    job.check_input()?;
    fs::create_dir_all(dir)?;
    match job {
        Job::Simulate { scenario, seed } => {
            let data = sample_dataset(scenario, *seed)?;
            save_dataset(&data, &dir.join("dataset.csv"))?;
            finish(job, dir, vec!["dataset.csv".into()], vec![], vec![])
        }
        Job::Fit { input, fit, .. } => {
            let data = load_dataset(input)?;
            let result = fit_mple(&data, fit)?;
            write_json(dir, "fit.json", &result)?;
            let mut w = csv::Writer::from_writer(create(dir, "profile.csv")?);
            w.write_record(["zeta", "loglik", "status"])?;
            for p in &result.profile_curve {
                let status = serde_json::to_value(p.status)?;
                w.write_record([
                    p.zeta.to_string(),
                    p.loglik.to_string(),
                    status.as_str().unwrap_or_default().to_string(),
                ])?;
            }
            w.flush()?;
            breslow(&data, &result.theta_hat)?.write_csv(create(dir, "breslow.csv")?)?;
            let files = ["fit.json", "profile.csv", "breslow.csv"].map(String::from).to_vec();
            finish(job, dir, files, vec![], vec![])
        }
        Job::Bootstrap { input, bootstrap, .. } => {
            let data = load_dataset(input)?;
            let draws = run_bootstrap(&data, bootstrap)?;
            let ci = percentile_ci(&draws, bootstrap.confidence_level)?;
            draws.write_csv(create(dir, "draws.csv")?)?;
            let summary = serde_json::json!({
                "method": bootstrap.label(),
                "n": draws.n,
                "m": draws.m,
                "zeta_hat": draws.zeta_hat,
                "replicates": bootstrap.replicates,
                "failures": draws.failures,
                "interval": ci,
            });
            write_json(dir, "interval.json", &summary)?;
            let bandwidths = if matches!(bootstrap.method, Method::Smooth | Method::SmoothCensoring) {
                vec![BandwidthRecord {
                    n: data.len(),
                    rep: 0,
                    data_seed: None,
                    bandwidth: normal_reference_bandwidth(&data)?,
                }]
            } else {
                vec![]
            };
            let files = ["draws.csv", "interval.json"].map(String::from).to_vec();
            finish(job, dir, files, bandwidths, vec![])
        }
        Job::LimitLaw {
            scenario,
            draws,
            seed,
            quadrature_step,
        } => {
            let cfg = derive_limit_config(scenario, *quadrature_step)?;
            let sample = sample_limit_batch(&cfg, *draws, *seed)?;
            write_json(dir, "limit_config.json", &cfg)?;
            write_limit_draws(&sample, create(dir, "limit_draws.csv")?)?;
            let files = ["limit_config.json", "limit_draws.csv"].map(String::from).to_vec();
            finish(job, dir, files, vec![], vec![])
        }
        Job::Experiment { spec } => experiment_to_dir(spec, dir).map(|(_, m)| m),
    }
}

/// Per-file comparison of a replayed run against its manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    /// `(file, recorded sha256, replayed sha256)`.
    pub files: Vec<(String, String, Option<String>)>,
}

impl ReplayReport {
    pub fn all_match(&self) -> bool {
        self.files.iter().all(|(_, a, b)| b.as_deref() == Some(a.as_str()))
    }
}

/// Rerun the job recorded in `manifest_path` into `dir` and compare hashes.
pub fn replay(manifest_path: &Path, dir: &Path) -> Result<ReplayReport> {
    let recorded = Manifest::load(manifest_path)?;
    let fresh = run_job(&recorded.job, dir)?;
    let files = recorded
        .outputs
        .iter()
        .map(|(f, h)| (f.clone(), h.clone(), fresh.outputs.get(f).cloned()))
        .collect();
    Ok(ReplayReport { files })
}
