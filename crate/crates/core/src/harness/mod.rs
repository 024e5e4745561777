//! Monte Carlo coverage study, job runner and reproducibility manifests.
//!
//! [`run_experiment`] simulates `monte_carlo_reps` datasets per sample size,
//! runs every configured bootstrap method on each, and writes:
//!
//! | file | columns |
//! |---|---|
//! | `coverage.csv` | `method,n,m_exponent,replicates,coverage,avg_length,mc_standard_error` |
//! | `replicates.csv` | `n,rep,method,data_seed,bootstrap_seed,zeta_hat,bandwidth,lower,upper,covered,failures,error` |
//! | `histograms.csv` | `n,source,bin_lower,bin_upper,count` |
//! | `scaled_draws.csv` | `n,source,value` |
//! | `km_stratum_<k>.csv` | `time,survival` |
//!
//! `source` is `monte_carlo` for `n (zeta_hat - zeta0)` across datasets and a
//! method label for the scaled draws of the designated dataset (`rep = 0`).
//! Dataset `(n, rep)` is simulated from seed `derive_seed(seed, [0, n, rep])`
//! and method `j` bootstraps it from `derive_seed(seed, [1, n, j, rep])`.

mod jobs;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{percentile_ci, run_bootstrap_from_fit, BootstrapConfig, Method};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{normal_reference_bandwidth, KmCurve, DEFAULT_MAX_STRATA};
use crate::likelihood::{fit_mple, FitResult, ProfileFitConfig};
use crate::rng::derive_seed;
use crate::simulate::{sample_dataset, ScenarioConfig};

pub use jobs::{replay, run_job, sha256_file, BandwidthRecord, Job, Manifest, ReplayReport, Settings, MANIFEST_FILE};

/// Replicate whose scaled draws go to the histogram and draws files.
pub const DESIGNATED_REP: usize = 0;

const DATA_STREAM: u64 = 0;
const BOOTSTRAP_STREAM: u64 = 1;

fn default_sizes() -> Vec<usize> {
    vec![300, 500, 1000]
}
fn default_reps() -> usize {
    200
}
fn default_bin_width() -> f64 {
    10.0
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    #[serde(default = "default_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_reps")]
    pub monte_carlo_reps: usize,
    /// Bootstrap schemes; their `seed` fields are ignored in favour of the
    /// derived per-dataset seeds.
    pub methods: Vec<BootstrapConfig>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Bin width of `histograms.csv`, in units of the scaled deviation.
    #[serde(default = "default_bin_width")]
    pub histogram_bin_width: f64,
    /// Sample size of the dataset whose Kaplan–Meier curves are exported;
    /// defaults to the largest size.
    #[serde(default)]
    pub km_sample_size: Option<usize>,
}

impl ExperimentSpec {
    /// Delayed-effect scenario, sizes 300/500/1000, 200 reps, B = 500, with
    /// the smooth, classical and conditional schemes and m-out-of-n at
    /// exponents 4/5, 9/10 and 14/15, all restricted to `zeta in [0.5, 1.5]`.
    pub fn table_defaults(output_dir: impl Into<PathBuf>) -> Self {
        let fit = ProfileFitConfig::with_window(0.5, 1.5);
        let b = 500;
        let mut methods: Vec<BootstrapConfig> = [Method::Smooth, Method::Classical, Method::Conditional]
            .into_iter()
            .map(|m| BootstrapConfig::new(m, b, fit.clone(), 0))
            .collect();
        for e in [4.0 / 5.0, 9.0 / 10.0, 14.0 / 15.0] {
            methods.push(BootstrapConfig::m_out_of_n(e, b, fit.clone(), 0));
        }
        ExperimentSpec {
            scenario: ScenarioConfig::delayed_effect(0),
            sample_sizes: default_sizes(),
            monte_carlo_reps: default_reps(),
            methods,
            output_dir: output_dir.into(),
            seed: 0,
            histogram_bin_width: default_bin_width(),
            km_sample_size: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.monte_carlo_reps == 0 {
            return Err(Error::InvalidInput("monte_carlo_reps must be at least 1".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(Error::InvalidInput("sample sizes must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidInput("no bootstrap methods configured".into()));
        }
        if !(self.histogram_bin_width > 0.0 && self.histogram_bin_width.is_finite()) {
            return Err(Error::InvalidInput("histogram bin width must be positive".into()));
        }
        let mut labels: Vec<String> = self.methods.iter().map(BootstrapConfig::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("method labels must be distinct".into()));
        }
        for m in &self.methods {
            m.validate()?;
        }
        self.scenario_at(self.sample_sizes[0]).validate()
    }

    pub fn scenario_at(&self, n: usize) -> ScenarioConfig {
        ScenarioConfig {
            n,
            ..self.scenario.clone()
        }
    }

    pub fn data_seed(&self, n: usize, rep: usize) -> u64 {
        derive_seed(self.seed, &[DATA_STREAM, n as u64, rep as u64])
    }

    pub fn bootstrap_seed(&self, n: usize, method: usize, rep: usize) -> u64 {
        derive_seed(self.seed, &[BOOTSTRAP_STREAM, n as u64, method as u64, rep as u64])
    }

    fn km_size(&self) -> usize {
        self.km_sample_size
            .unwrap_or_else(|| *self.sample_sizes.iter().max().expect("validated sizes"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub method: String,
    pub n: usize,
    pub m_exponent: f64,
    pub replicates: usize,
    pub coverage: f64,
    pub avg_length: f64,
    pub mc_standard_error: f64,
}

/// `sqrt(coverage (1 - coverage) / reps)`.
pub fn mc_standard_error(coverage: f64, reps: usize) -> f64 {
    (coverage * (1.0 - coverage) / reps as f64).sqrt()
}

/// An `(n, method)` cell that was aborted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedCell {
    pub method: String,
    pub n: usize,
    pub rep: usize,
    pub error: String,
}

/// Outcome of one method on one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateRecord {
    pub n: usize,
    pub rep: usize,
    pub method: String,
    pub data_seed: u64,
    pub bootstrap_seed: u64,
    pub zeta_hat: Option<f64>,
    pub bandwidth: Option<f64>,
    pub interval: Option<(f64, f64)>,
    pub failures: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub rows: Vec<CoverageRow>,
    pub failed_cells: Vec<FailedCell>,
    pub records: Vec<ReplicateRecord>,
    /// `(n, source, scaled values)`; see the module docs.
    pub samples: Vec<(usize, String, Vec<f64>)>,
    /// Kaplan–Meier curves of the designated dataset, by covariate level.
    pub km: Vec<(Vec<f64>, KmCurve)>,
}

/// Errors that abort a cell instead of the whole run.
fn is_cell_error(e: &Error) -> bool {
    matches!(e, Error::TooManyFailures { .. } | Error::FitFailed(_))
}

struct DatasetOutcome {
    zeta_hat: Option<f64>,
    bandwidth: Option<f64>,
    methods: Vec<Result<(crate::bootstrap::ConfidenceInterval, crate::bootstrap::BootstrapDraws)>>,
}

fn run_dataset(spec: &ExperimentSpec, n: usize, rep: usize) -> Result<DatasetOutcome> {
    let data = sample_dataset(&spec.scenario_at(n), spec.data_seed(n, rep))?;
    let bandwidth = normal_reference_bandwidth(&data).ok();
    let mut fits: Vec<(ProfileFitConfig, std::result::Result<FitResult, String>)> = Vec::new();
    let mut methods = Vec::with_capacity(spec.methods.len());
    for (j, cfg) in spec.methods.iter().enumerate() {
        let k = match fits.iter().position(|(c, _)| c == &cfg.fit) {
            Some(k) => k,
            None => {
                fits.push((cfg.fit.clone(), fit_mple(&data, &cfg.fit).map_err(|e| e.to_string())));
                fits.len() - 1
            }
        };
        let outcome = match &fits[k].1 {
            Err(msg) => Err(Error::FitFailed(msg.clone())),
            Ok(fit) => {
                let cfg = BootstrapConfig {
                    seed: spec.bootstrap_seed(n, j, rep),
                    ..cfg.clone()
                };
                bootstrap_one(&data, fit, &cfg)
            }
        };
        match outcome {
            Err(e) if !is_cell_error(&e) => return Err(e),
            other => methods.push(other),
        }
    }
    let zeta_hat = fits.first().and_then(|f| f.1.as_ref().ok()).map(|f| f.theta_hat.zeta);
    Ok(DatasetOutcome {
        zeta_hat,
        bandwidth,
        methods,
    })
}

fn bootstrap_one(
    data: &Dataset,
    fit: &FitResult,
    cfg: &BootstrapConfig,
) -> Result<(crate::bootstrap::ConfidenceInterval, crate::bootstrap::BootstrapDraws)> {
    let draws = run_bootstrap_from_fit(data, fit, cfg)?;
    let ci = percentile_ci(&draws, cfg.confidence_level)?;
    Ok((ci, draws))
}

/// Run the coverage study and write its artifacts plus `manifest.json` to
/// `spec.output_dir`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<(ExperimentReport, Manifest)> {
    jobs::experiment_to_dir(spec, &spec.output_dir)
}

/// The study itself, without touching the file system.
pub fn compute_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let zeta0 = spec.scenario.zeta0;
    let mut rows = Vec::new();
    let mut failed_cells = Vec::new();
    let mut records = Vec::new();
    let mut samples = Vec::new();
    for &n in &spec.sample_sizes {
        let outcomes: Vec<DatasetOutcome> = (0..spec.monte_carlo_reps)
            .into_par_iter()
            .map(|rep| run_dataset(spec, n, rep))
            .collect::<Result<_>>()?;
        let mc: Vec<f64> = outcomes
            .iter()
            .filter_map(|o| o.zeta_hat)
            .map(|z| n as f64 * (z - zeta0))
            .collect();
        samples.push((n, "monte_carlo".to_string(), mc));
        for (j, cfg) in spec.methods.iter().enumerate() {
            let label = cfg.label();
            let mut covered = 0usize;
            let mut length = 0.0;
            let mut failed: Option<FailedCell> = None;
            for (rep, o) in outcomes.iter().enumerate() {
                let mut rec = ReplicateRecord {
                    n,
                    rep,
                    method: label.clone(),
                    data_seed: spec.data_seed(n, rep),
                    bootstrap_seed: spec.bootstrap_seed(n, j, rep),
                    zeta_hat: o.zeta_hat,
                    bandwidth: o.bandwidth,
                    interval: None,
                    failures: 0,
                    error: None,
                };
                match &o.methods[j] {
                    Ok((ci, draws)) => {
                        rec.interval = Some((ci.lower, ci.upper));
                        rec.failures = draws.failures;
                        covered += ci.contains(zeta0) as usize;
                        length += ci.width();
                        if rep == DESIGNATED_REP {
                            samples.push((n, label.clone(), draws.replicate_zeta.clone()));
                        }
                    }
                    Err(e) => {
                        rec.error = Some(e.kind().to_string());
                        if failed.is_none() {
                            failed = Some(FailedCell {
                                method: label.clone(),
                                n,
                                rep,
                                error: e.to_string(),
                            });
                        }
                    }
                }
                records.push(rec);
            }
            match failed {
                Some(cell) => {
                    log::warn!("cell ({}, n = {}) aborted: {}", cell.method, n, cell.error);
                    failed_cells.push(cell);
                }
                None => {
                    let reps = spec.monte_carlo_reps;
                    let coverage = covered as f64 / reps as f64;
                    rows.push(CoverageRow {
                        method: label,
                        n,
                        m_exponent: cfg.m_exponent,
                        replicates: reps,
                        coverage,
                        avg_length: length / reps as f64,
                        mc_standard_error: mc_standard_error(coverage, reps),
                    });
                }
            }
        }
    }
    let km_n = spec.km_size();
    let km_data = sample_dataset(&spec.scenario_at(km_n), spec.data_seed(km_n, DESIGNATED_REP))?;
    let km = crate::estimators::km_curves(&km_data, DEFAULT_MAX_STRATA)?;
    Ok(ExperimentReport {
        rows,
        failed_cells,
        records,
        samples,
        km,
    })
}

/// Stratified Kaplan–Meier curves of `T~` with `delta` as the event flag.
pub fn km_curves(data: &Dataset) -> Result<Vec<(Vec<f64>, KmCurve)>> {
    crate::estimators::km_curves(data, DEFAULT_MAX_STRATA)
}

/// Fixed-width histogram with bins `[k w, (k + 1) w)` from the lowest to
/// the highest occupied bin.
pub fn histogram(values: &[f64], width: f64) -> Vec<(f64, f64, usize)> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for v in values {
        *counts.entry((v / width).floor() as i64).or_default() += 1;
    }
    let lo = *counts.keys().next().expect("nonempty");
    let hi = *counts.keys().next_back().expect("nonempty");
    (lo..=hi)
        .map(|k| {
            let c = counts.get(&k).copied().unwrap_or(0);
            (k as f64 * width, (k + 1) as f64 * width, c)
        })
        .collect()
}

pub(crate) fn write_experiment_files(
    spec: &ExperimentSpec,
    report: &ExperimentReport,
    dir: &Path,
) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let mut w = csv::Writer::from_path(dir.join("coverage.csv"))?;
    for r in &report.rows {
        w.serialize(r)?;
    }
    if report.rows.is_empty() {
        w.write_record(["method", "n", "m_exponent", "replicates", "coverage", "avg_length", "mc_standard_error"])?;
    }
    w.flush()?;
    files.push("coverage.csv".to_string());

    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_path(dir.join("replicates.csv"))?;
    w.write_record([
        "n", "rep", "method", "data_seed", "bootstrap_seed", "zeta_hat", "bandwidth", "lower",
        "upper", "covered", "failures", "error",
    ])?;
    for r in &report.records {
        let (lo, hi) = r.interval.unzip();
        let covered = r
            .interval
            .map(|(a, b)| (a <= spec.scenario.zeta0 && spec.scenario.zeta0 <= b).to_string())
            .unwrap_or_default();
        w.write_record([
            r.n.to_string(),
            r.rep.to_string(),
            r.method.clone(),
            r.data_seed.to_string(),
            r.bootstrap_seed.to_string(),
            opt(r.zeta_hat),
            opt(r.bandwidth),
            opt(lo),
            opt(hi),
            covered,
            r.failures.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    files.push("replicates.csv".to_string());

    let mut h = csv::Writer::from_path(dir.join("histograms.csv"))?;
    let mut d = csv::Writer::from_path(dir.join("scaled_draws.csv"))?;
    h.write_record(["n", "source", "bin_lower", "bin_upper", "count"])?;
    d.write_record(["n", "source", "value"])?;
    for (n, source, values) in &report.samples {
        for (lo, hi, c) in histogram(values, spec.histogram_bin_width) {
            h.write_record([n.to_string(), source.clone(), lo.to_string(), hi.to_string(), c.to_string()])?;
        }
        for v in values {
            d.write_record([n.to_string(), source.clone(), v.to_string()])?;
        }
    }
    h.flush()?;
    d.flush()?;
    files.push("histograms.csv".to_string());
    files.push("scaled_draws.csv".to_string());

    for (k, (_, curve)) in report.km.iter().enumerate() {
        let name = format!("km_stratum_{}.csv", k + 1);
        curve.write_csv(std::fs::File::create(dir.join(&name))?)?;
        files.push(name);
    }
    Ok(files)
}
