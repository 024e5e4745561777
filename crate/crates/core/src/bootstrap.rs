//! Bootstrap schemes for the change-point estimator and percentile intervals.
//!
//! Every scheme builds bootstrap samples of the original size (or `m_n` for
//! the m-out-of-n scheme), refits the MPLE on the same change-point window,
//! and records `m_n (zeta* - zeta_hat)`. The model-based schemes keep every
//! subject's covariates and regenerate the failure time from the fitted
//! model and the censoring time from a per-level Kaplan–Meier estimator.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Subject};
use crate::error::{Error, Result};
use crate::estimators::{
    conditional_survival_smooth, conditional_survival_step, sample_censoring, FittedModel,
    SurvivalSampler, DEFAULT_GRID_DIVISIONS, DEFAULT_MAX_STRATA,
};
use crate::likelihood::{fit_mple, FitResult, ProfileFitConfig};
use crate::rng;
use crate::stats::quantile_sorted;

/// Largest tolerated share of failed replicate fits.
pub const MAX_FAILURE_SHARE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Resample subjects from the empirical distribution.
    Classical,
    /// Resample `m_n < n` subjects from the empirical distribution.
    MOutOfN,
    /// Failure times from the Breslow-based conditional law, fresh censoring.
    Conditional,
    /// As `Conditional`, keeping observed censoring times.
    ConditionalCensoring,
    /// Failure times from the kernel-smoothed conditional law, fresh censoring.
    Smooth,
    /// As `Smooth`, keeping observed censoring times.
    SmoothCensoring,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Classical,
        Method::MOutOfN,
        Method::Conditional,
        Method::ConditionalCensoring,
        Method::Smooth,
        Method::SmoothCensoring,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Classical => "classical",
            Method::MOutOfN => "m_out_of_n",
            Method::Conditional => "conditional",
            Method::ConditionalCensoring => "conditional_censoring",
            Method::Smooth => "smooth",
            Method::SmoothCensoring => "smooth_censoring",
        }
    }

    fn is_model_based(self) -> bool {
        !matches!(self, Method::Classical | Method::MOutOfN)
    }

    fn is_smooth(self) -> bool {
        matches!(self, Method::Smooth | Method::SmoothCensoring)
    }

    fn keeps_censoring(self) -> bool {
        matches!(self, Method::ConditionalCensoring | Method::SmoothCensoring)
    }
}

fn default_exponent() -> f64 {
    1.0
}
fn default_level() -> f64 {
    0.95
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub method: Method,
    pub replicates: usize,
    /// `m_n = ceil(n^m_exponent)`; must be 1 unless the method is `MOutOfN`.
    #[serde(default = "default_exponent")]
    pub m_exponent: f64,
    pub fit: ProfileFitConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_level")]
    pub confidence_level: f64,
}

impl BootstrapConfig {
    pub fn new(method: Method, replicates: usize, fit: ProfileFitConfig, seed: u64) -> Self {
        BootstrapConfig {
            method,
            replicates,
            m_exponent: 1.0,
            fit,
            seed,
            confidence_level: default_level(),
        }
    }

    pub fn m_out_of_n(exponent: f64, replicates: usize, fit: ProfileFitConfig, seed: u64) -> Self {
        BootstrapConfig {
            m_exponent: exponent,
            ..Self::new(Method::MOutOfN, replicates, fit, seed)
        }
    }

    /// Short label, with the exponent for m-out-of-n (`m_out_of_n_0.8`).
    pub fn label(&self) -> String {
        match self.method {
            Method::MOutOfN => format!("m_out_of_n_{}", self.m_exponent),
            other => other.label().to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        let e = self.m_exponent;
        match self.method {
            Method::MOutOfN if !(e > 0.0 && e < 1.0) => Err(Error::InvalidInput(format!(
                "m-out-of-n needs an exponent in (0, 1), got {e}"
            ))),
            Method::MOutOfN => Ok(()),
            _ if e != 1.0 => Err(Error::InvalidInput(format!(
                "method {} resamples n subjects; exponent must be 1, got {e}",
                self.method.label()
            ))),
            _ => Ok(()),
        }?;
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return Err(Error::InvalidInput(format!(
                "confidence level {} not in (0, 1)",
                self.confidence_level
            )));
        }
        Ok(())
    }

    /// Bootstrap sample size for an original sample of size `n`.
    pub fn m_for(&self, n: usize) -> usize {
        if self.m_exponent == 1.0 {
            n
        } else {
            ((n as f64).powf(self.m_exponent).ceil() as usize).clamp(1, n)
        }
    }
}

/// Scaled bootstrap deviations of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDraws {
    pub method: Method,
    pub n: usize,
    pub m: usize,
    pub tau: f64,
    pub zeta_hat: f64,
    /// `m (zeta*_b - zeta_hat)`, ascending.
    pub scaled_zeta: Vec<f64>,
    /// `sqrt(m) (alpha*_b - alpha_hat)` in replicate order.
    pub scaled_alpha: Vec<Vec<f64>>,
    /// `sqrt(m) (beta*_b - beta_hat)` in replicate order.
    pub scaled_beta: Vec<Vec<f64>>,
    /// Replicate order of `scaled_zeta` before sorting.
    pub replicate_zeta: Vec<f64>,
    pub failures: usize,
}

impl BootstrapDraws {
    pub fn len(&self) -> usize {
        self.scaled_zeta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scaled_zeta.is_empty()
    }

    /// CSV with one successful replicate per row:
    /// `zeta,alpha1..alphap,beta1..betap`, all scaled.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let p = self.scaled_alpha.first().map_or(0, Vec::len);
        let mut wtr = csv::Writer::from_writer(out);
        let header: Vec<String> = std::iter::once("zeta".to_string())
            .chain((1..=p).map(|k| format!("alpha{k}")))
            .chain((1..=p).map(|k| format!("beta{k}")))
            .collect();
        wtr.write_record(&header)?;
        for ((z, a), b) in self.replicate_zeta.iter().zip(&self.scaled_alpha).zip(&self.scaled_beta) {
            let rec: Vec<String> = std::iter::once(z)
                .chain(a)
                .chain(b)
                .map(f64::to_string)
                .collect();
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: String,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// `m` draws with replacement of whole subjects.
pub fn resample_classical<R: Rng + ?Sized>(data: &Dataset, m: usize, rng: &mut R) -> Result<Dataset> {
    if m == 0 {
        return Err(Error::InvalidInput("bootstrap size must be at least 1".into()));
    }
    let n = data.len();
    let subjects = (0..m)
        .map(|_| data.subjects()[rng.random_range(0..n)].clone())
        .collect();
    Dataset::new(subjects, data.tau())
}

/// Model-based resampler with the per-level conditional samplers cached.
#[derive(Clone, Debug)]
pub struct ConditionalResampler {
    model: FittedModel,
    keep_censoring: bool,
    levels: Vec<Vec<f64>>,
    samplers: Vec<SurvivalSampler>,
    subject_level: Vec<usize>,
}

impl ConditionalResampler {
    /// `model` must carry the censoring estimate, and the smoothed hazard when
    /// `smooth` is set.
    pub fn new(model: FittedModel, keep_censoring: bool, smooth: bool) -> Result<Self> {
        if model.censoring.is_none() {
            return Err(Error::InvalidInput(
                "conditional resampling needs a censoring estimate".into(),
            ));
        }
        let mut levels: Vec<Vec<f64>> = Vec::new();
        let mut subject_level = Vec::with_capacity(model.data.len());
        for s in model.data.subjects() {
            if !s.covariates.is_constant() {
                return Err(Error::NonCategorical(
                    "conditional resampling needs time-constant covariates".into(),
                ));
            }
            let z = s.covariates.value_at(0.0);
            let idx = match levels.iter().position(|l| l.as_slice() == z) {
                Some(i) => i,
                None => {
                    levels.push(z.to_vec());
                    levels.len() - 1
                }
            };
            subject_level.push(idx);
        }
        let samplers = levels
            .iter()
            .map(|z| {
                let path = crate::data::CovariatePath::Constant(z.clone());
                if smooth {
                    conditional_survival_smooth(&model, &path)
                } else {
                    Ok(conditional_survival_step(&model, &path))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ConditionalResampler {
            model,
            keep_censoring,
            levels,
            samplers,
            subject_level,
        })
    }

    pub fn model(&self) -> &FittedModel {
        &self.model
    }

    /// Latent `(T*, C*)` per original subject, in subject order. `T*` may be
    /// [`BEYOND_HORIZON`](crate::simulate::BEYOND_HORIZON).
    pub fn draw_latent<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<(f64, f64)>> {
        let censoring = self.model.censoring.as_ref().expect("checked in new");
        self.model
            .data
            .subjects()
            .iter()
            .zip(&self.subject_level)
            .map(|(s, &l)| {
                let z = &self.levels[l];
                let t_star = self.samplers[l].sample(rng);
                let c_star = match (self.keep_censoring, s.event) {
                    (true, false) => s.observed_time,
                    (true, true) => sample_censoring(censoring, z, Some(s.observed_time), rng)?,
                    (false, _) => sample_censoring(censoring, z, None, rng)?,
                };
                Ok((t_star, c_star))
            })
            .collect()
    }

    /// One bootstrap sample of the original size.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Dataset> {
        let tau = self.model.tau();
        let subjects = self
            .draw_latent(rng)?
            .into_iter()
            .zip(&self.subject_level)
            .map(|((t, c), &l)| Subject::constant(t.min(c).min(tau), t <= c, self.levels[l].clone()))
            .collect();
        Dataset::new(subjects, tau)
    }
}

/// Build the resampling model for `method` from an already fitted dataset.
pub fn conditional_resampler(data: &Dataset, fit: &FitResult, method: Method) -> Result<ConditionalResampler> {
    let mut model = FittedModel::from_params(data.clone(), fit.theta_hat.clone())?
        .with_censoring(DEFAULT_MAX_STRATA)?;
    if method.is_smooth() {
        model = model.with_smooth_hazard(data.tau() / DEFAULT_GRID_DIVISIONS as f64)?;
    }
    ConditionalResampler::new(model, method.keeps_censoring(), method.is_smooth())
}

/// Run `cfg.replicates` bootstrap replicates. Replicate `b` draws from
/// stream `(cfg.seed, b)`, so the result does not depend on scheduling.
pub fn run_bootstrap(data: &Dataset, cfg: &BootstrapConfig) -> Result<BootstrapDraws> {
    cfg.validate()?;
    let fit = fit_mple(data, &cfg.fit).map_err(|e| Error::FitFailed(e.to_string()))?;
    run_bootstrap_from_fit(data, &fit, cfg)
}

/// As [`run_bootstrap`], reusing an existing fit of `data` under `cfg.fit`.
pub fn run_bootstrap_from_fit(data: &Dataset, fit: &FitResult, cfg: &BootstrapConfig) -> Result<BootstrapDraws> {
    cfg.validate()?;
    let n = data.len();
    let m = cfg.m_for(n);
    let resampler = if cfg.method.is_model_based() {
        Some(conditional_resampler(data, fit, cfg.method)?)
    } else {
        None
    };
    let theta = &fit.theta_hat;
    let scale = m as f64;
    let root = scale.sqrt();

    let replicate = |b: usize| -> Option<(f64, Vec<f64>, Vec<f64>)> {
        let mut r = rng::stream(cfg.seed, &[b as u64]);
        let sample = match &resampler {
            Some(res) => res.resample(&mut r),
            None => resample_classical(data, m, &mut r),
        }
        .ok()?;
        let refit = fit_mple(&sample, &cfg.fit).ok()?;
        if !refit.converged {
            return None;
        }
        let t = refit.theta_hat;
        Some((
            scale * (t.zeta - theta.zeta),
            t.alpha.iter().zip(&theta.alpha).map(|(a, b)| root * (a - b)).collect(),
            t.beta.iter().zip(&theta.beta).map(|(a, b)| root * (a - b)).collect(),
        ))
    };
    let rows: Vec<_> = (0..cfg.replicates).into_par_iter().map(replicate).collect();

    let failures = rows.iter().filter(|r| r.is_none()).count();
    if failures as f64 > MAX_FAILURE_SHARE * cfg.replicates as f64 {
        return Err(Error::TooManyFailures {
            failures,
            replicates: cfg.replicates,
        });
    }
    let mut replicate_zeta = Vec::with_capacity(cfg.replicates);
    let mut scaled_alpha = Vec::with_capacity(cfg.replicates);
    let mut scaled_beta = Vec::with_capacity(cfg.replicates);
    for (z, a, b) in rows.into_iter().flatten() {
        replicate_zeta.push(z);
        scaled_alpha.push(a);
        scaled_beta.push(b);
    }
    let mut scaled_zeta = replicate_zeta.clone();
    scaled_zeta.sort_by(f64::total_cmp);
    Ok(BootstrapDraws {
        method: cfg.method,
        n,
        m,
        tau: data.tau(),
        zeta_hat: theta.zeta,
        scaled_zeta,
        scaled_alpha,
        scaled_beta,
        replicate_zeta,
        failures,
    })
}

/// Basic percentile interval
/// `[zeta_hat - q_{1-a/2} / n, zeta_hat - q_{a/2} / n]`, `a = 1 - level`,
/// clamped to `[0, tau]`. The divisor is the original `n` for every scheme.
pub fn percentile_ci(draws: &BootstrapDraws, level: f64) -> Result<ConfidenceInterval> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("level {level} not in (0, 1)")));
    }
    let a = 1.0 - level;
    let n = draws.n as f64;
    let q_hi = quantile_sorted(&draws.scaled_zeta, 1.0 - a / 2.0);
    let q_lo = quantile_sorted(&draws.scaled_zeta, a / 2.0);
    let lower = (draws.zeta_hat - q_hi / n).clamp(0.0, draws.tau);
    let upper = (draws.zeta_hat - q_lo / n).clamp(0.0, draws.tau);
    Ok(ConfidenceInterval {
        lower,
        upper,
        level,
        method: draws.method.label().to_string(),
    })
}
