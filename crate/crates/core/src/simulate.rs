//! Data generation from the change-point Cox model.
//!
//! Survival times are drawn by exact inversion of the conditional cumulative
//! hazard, which is piecewise linear when the baseline hazard is piecewise
//! constant. Censoring is `min(Exp(rate), tau)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{dot, Dataset, Subject};
use crate::error::{Error, Result};
use crate::rng;

/// Marker for a latent survival time beyond the study horizon.
pub const BEYOND_HORIZON: f64 = f64::INFINITY;

/// Piecewise-constant baseline hazard. Piece `k` covers
/// `[breakpoints[k-1], breakpoints[k])`, the last piece extends past `tau`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    pub rates: Vec<f64>,
}

impl BaselineHazard {
    pub fn constant(rate: f64) -> Self {
        BaselineHazard {
            breakpoints: Vec::new(),
            rates: vec![rate],
        }
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        self.rates[self.breakpoints.partition_point(|&b| b <= t)]
    }

    fn validate(&self) -> Result<()> {
        if self.rates.len() != self.breakpoints.len() + 1 {
            return Err(Error::InvalidInput(
                "baseline hazard needs one more rate than breakpoints".into(),
            ));
        }
        if self.rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidInput(
                "baseline hazard must be strictly positive".into(),
            ));
        }
        if self.breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "baseline breakpoints must be increasing".into(),
            ));
        }
        Ok(())
    }
}

/// One atom of the covariate distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateLevel {
    pub value: Vec<f64>,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub alpha0: Vec<f64>,
    pub beta0: Vec<f64>,
    pub zeta0: f64,
    pub baseline_hazard: BaselineHazard,
    pub covariate_law: Vec<CovariateLevel>,
    /// Exponential censoring rate per unit time; draws are capped at `tau`.
    pub censoring_rate: f64,
    pub tau: f64,
    #[serde(default)]
    pub n: usize,
}

impl ScenarioConfig {
    /// Two-arm trial with a delayed treatment effect: `Z ~ Bernoulli(0.5)`,
    /// `alpha0 = 0`, `beta0 = -1.5`, `zeta0 = 1`, `lambda0 = 0.5`,
    /// censoring `Exp(0.1)` capped at `tau = 4`.
    pub fn delayed_effect(n: usize) -> Self {
        ScenarioConfig {
            alpha0: vec![0.0],
            beta0: vec![-1.5],
            zeta0: 1.0,
            baseline_hazard: BaselineHazard::constant(0.5),
            covariate_law: vec![
                CovariateLevel {
                    value: vec![0.0],
                    prob: 0.5,
                },
                CovariateLevel {
                    value: vec![1.0],
                    prob: 0.5,
                },
            ],
            censoring_rate: 0.1,
            tau: 4.0,
            n,
        }
    }

    pub fn dim(&self) -> usize {
        self.alpha0.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_model()?;
        if self.n == 0 {
            return Err(Error::InvalidInput("sample size must be positive".into()));
        }
        Ok(())
    }

    /// As [`validate`](Self::validate) without the sample-size check.
    pub fn validate_model(&self) -> Result<()> {
        self.baseline_hazard.validate()?;
        let p = self.dim();
        if self.beta0.len() != p || self.covariate_law.iter().any(|l| l.value.len() != p) {
            return Err(Error::InvalidInput("dimension mismatch in scenario".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidInput("tau must be positive".into()));
        }
        if !(self.zeta0 > 0.0 && self.zeta0 < self.tau) {
            return Err(Error::InvalidInput("zeta0 must lie in (0, tau)".into()));
        }
        if self.covariate_law.is_empty() || self.covariate_law.iter().any(|l| l.prob < 0.0) {
            return Err(Error::InvalidInput(
                "covariate law needs nonnegative probabilities".into(),
            ));
        }
        let total: f64 = self.covariate_law.iter().map(|l| l.prob).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "covariate probabilities sum to {total}, not 1"
            )));
        }
        if !(self.censoring_rate >= 0.0 && self.censoring_rate.is_finite()) {
            return Err(Error::InvalidInput("censoring rate must be >= 0".into()));
        }
        Ok(())
    }

    /// Conditional hazard profile of `T` given constant covariate `z`.
    pub fn hazard_profile(&self, z: &[f64]) -> HazardProfile {
        let mut nodes: Vec<f64> = vec![0.0, self.zeta0];
        nodes.extend(
            self.baseline_hazard
                .breakpoints
                .iter()
                .copied()
                .filter(|&b| b > 0.0 && b < self.tau),
        );
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let lp_pre = dot(&self.alpha0, z).exp();
        let lp_post = dot(&self.beta0, z).exp();
        let mut pieces = Vec::with_capacity(nodes.len());
        let mut cum = 0.0;
        for (k, &start) in nodes.iter().enumerate() {
            let end = nodes.get(k + 1).copied().unwrap_or(self.tau);
            let tilt = if start < self.zeta0 { lp_pre } else { lp_post };
            let rate = self.baseline_hazard.rate_at(start) * tilt;
            pieces.push(HazardPiece {
                start,
                end,
                rate,
                cum_start: cum,
            });
            cum += rate * (end - start);
        }
        HazardProfile { pieces }
    }
}

#[derive(Clone, Copy, Debug)]
struct HazardPiece {
    start: f64,
    end: f64,
    rate: f64,
    cum_start: f64,
}

/// Piecewise-linear cumulative hazard `Lambda(t | z)` on `[0, tau]`.
#[derive(Clone, Debug)]
pub struct HazardProfile {
    pieces: Vec<HazardPiece>,
}

impl HazardProfile {
    pub fn cumulative(&self, t: f64) -> f64 {
        let last = self.pieces.last().expect("profile has pieces");
        let t = t.clamp(0.0, last.end);
        let k = self.pieces.partition_point(|p| p.end < t).min(self.pieces.len() - 1);
        let p = &self.pieces[k];
        p.cum_start + p.rate * (t - p.start)
    }

    pub fn survival(&self, t: f64) -> f64 {
        (-self.cumulative(t)).exp()
    }

    /// Hazard rate of `T` at `t` (right-continuous).
    pub fn rate_at(&self, t: f64) -> f64 {
        let k = self.pieces.partition_point(|p| p.end <= t).min(self.pieces.len() - 1);
        self.pieces[k].rate
    }

    /// Exact root of `Lambda(t) = target`, or [`BEYOND_HORIZON`].
    pub fn invert(&self, target: f64) -> f64 {
        for p in &self.pieces {
            let cum_end = p.cum_start + p.rate * (p.end - p.start);
            if target <= cum_end {
                return p.start + (target - p.cum_start) / p.rate;
            }
        }
        BEYOND_HORIZON
    }
}

/// Inverse-transform draw of a survival time for covariate `z` from a
/// uniform `u` in (0, 1).
pub fn sample_survival_time(cfg: &ScenarioConfig, z: &[f64], u: f64) -> f64 {
    cfg.hazard_profile(z).invert(-(-u).ln_1p())
}

/// Latent draw of one simulated subject.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSubject {
    pub level: usize,
    /// Survival time, possibly [`BEYOND_HORIZON`].
    pub survival_time: f64,
    pub censoring_time: f64,
}

/// Latent survival and censoring draws; subject `i` uses stream `(seed, i)`.
pub fn sample_latent(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<LatentSubject>> {
    cfg.validate()?;
    let profiles: Vec<HazardProfile> = cfg
        .covariate_law
        .iter()
        .map(|l| cfg.hazard_profile(&l.value))
        .collect();
    let cdf: Vec<f64> = cfg
        .covariate_law
        .iter()
        .scan(0.0, |acc, l| {
            *acc += l.prob;
            Some(*acc)
        })
        .collect();
    let draw = |i: usize| {
        let mut r = rng::stream(seed, &[i as u64]);
        let u_level: f64 = r.random();
        let level = cdf
            .iter()
            .position(|&c| u_level < c)
            .unwrap_or(cdf.len() - 1);
        let u_t: f64 = r.random();
        let survival_time = profiles[level].invert(-(-u_t).ln_1p());
        let u_c: f64 = r.random();
        let censoring_time = if cfg.censoring_rate > 0.0 {
            (-(-u_c).ln_1p() / cfg.censoring_rate).min(cfg.tau)
        } else {
            cfg.tau
        };
        LatentSubject {
            level,
            survival_time,
            censoring_time,
        }
    };
    Ok((0..cfg.n).into_par_iter().map(draw).collect())
}

/// Simulate `cfg.n` subjects. Deterministic in `(cfg, seed)`.
pub fn sample_dataset(cfg: &ScenarioConfig, seed: u64) -> Result<Dataset> {
    let latent = sample_latent(cfg, seed)?;
    let subjects = latent
        .into_iter()
        .map(|l| {
            let event = l.survival_time <= l.censoring_time;
            Subject::constant(
                l.survival_time.min(l.censoring_time),
                event,
                cfg.covariate_law[l.level].value.clone(),
            )
        })
        .collect();
    Dataset::new(subjects, cfg.tau)
}
