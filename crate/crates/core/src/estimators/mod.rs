//! Nonparametric ingredients of the model-based bootstrap schemes.
//!
//! [`breslow`] gives the cumulative baseline hazard under a fitted
//! change-point model, [`kernel_smooth_hazard`] smooths its increments into a
//! hazard rate, and [`km_censoring`] estimates the censoring law per
//! covariate level. The conditional survival samplers built on top of them
//! regenerate failure times for a fixed covariate path.

mod km;
mod smooth;

use std::io::Write;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::data::{dot, ChangePointParams, CovariatePath, Dataset};
use crate::error::{Error, Result};
use crate::likelihood::{fit_mple, ProfileFitConfig, RiskTable};
use crate::simulate::BEYOND_HORIZON;

pub use km::{
    kaplan_meier, km_censoring, km_curves, sample_censoring, CensoringEstimate, KmCurve,
    DEFAULT_MAX_STRATA,
};
pub use smooth::{kernel_smooth_hazard, normal_reference_bandwidth, SmoothHazard};

/// Grid step for the smoothed hazard, as a fraction of `tau`.
pub const DEFAULT_GRID_DIVISIONS: usize = 4096;

/// Right-continuous step cumulative hazard `Lambda(t) = sum_{t_k <= t} dLambda_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepCumHazard {
    pub jump_times: Vec<f64>,
    pub jump_sizes: Vec<f64>,
}

impl StepCumHazard {
    pub fn cumulative(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s <= t);
        self.jump_sizes[..k].iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.jump_sizes.iter().sum()
    }

    /// CSV with columns `time,cumulative_hazard`, one row per jump.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut cum = 0.0;
        let rows = self.jump_times.iter().zip(&self.jump_sizes).map(|(&t, &d)| {
            cum += d;
            (t, cum)
        });
        crate::io::write_xy_csv(out, ["time", "cumulative_hazard"], rows)
    }
}

/// Breslow estimator of the cumulative baseline hazard under `theta_hat`.
pub fn breslow(data: &Dataset, theta_hat: &ChangePointParams) -> Result<StepCumHazard> {
    if data.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    if theta_hat.alpha.len() != data.dim() || theta_hat.beta.len() != data.dim() {
        return Err(Error::InvalidInput(
            "coefficient dimension does not match the covariates".into(),
        ));
    }
    Ok(breslow_table(&RiskTable::new(data), theta_hat))
}

pub(crate) fn breslow_table(table: &RiskTable, theta_hat: &ChangePointParams) -> StepCumHazard {
    let jump_sizes = table
        .times
        .iter()
        .enumerate()
        .map(|(e, &t)| table.deaths[e] / table.at_risk_weight(e, theta_hat.coef_at(t)))
        .collect();
    StepCumHazard {
        jump_times: table.times.clone(),
        jump_sizes,
    }
}

/// Fitted change-point model together with the estimators the
/// model-based bootstrap schemes draw from.
#[derive(Clone, Debug)]
pub struct FittedModel {
    pub data: Dataset,
    pub theta_hat: ChangePointParams,
    pub breslow: StepCumHazard,
    pub smooth_hazard: Option<SmoothHazard>,
    pub censoring: Option<CensoringEstimate>,
}

impl FittedModel {
    /// Fit the MPLE on `data` and build the Breslow estimator.
    pub fn fit(data: Dataset, cfg: &ProfileFitConfig) -> Result<Self> {
        let fit = fit_mple(&data, cfg)?;
        Self::from_params(data, fit.theta_hat)
    }

    pub fn from_params(data: Dataset, theta_hat: ChangePointParams) -> Result<Self> {
        let breslow = breslow(&data, &theta_hat)?;
        Ok(FittedModel {
            data,
            theta_hat,
            breslow,
            smooth_hazard: None,
            censoring: None,
        })
    }

    pub fn with_smooth_hazard(mut self, grid_step: f64) -> Result<Self> {
        self.smooth_hazard = Some(kernel_smooth_hazard(&self, grid_step)?);
        Ok(self)
    }

    pub fn with_censoring(mut self, max_strata: usize) -> Result<Self> {
        self.censoring = Some(km_censoring(&self.data, max_strata)?);
        Ok(self)
    }

    pub fn tau(&self) -> f64 {
        self.data.tau()
    }
}

/// Sampler for a conditional failure time `T*` given a covariate path.
///
/// Holds the conditional cumulative hazard at a set of nodes. The discrete
/// form returns the first node whose cumulative hazard reaches an `Exp(1)`
/// draw; the continuous form interpolates linearly between nodes. Draws past
/// the last node return [`BEYOND_HORIZON`].
#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalSampler {
    nodes: Vec<f64>,
    cum: Vec<f64>,
    continuous: bool,
}

impl SurvivalSampler {
    /// Conditional cumulative hazard `Lambda(t | z)` (0 before the first node).
    pub fn cumulative(&self, t: f64) -> f64 {
        let k = self.nodes.partition_point(|&s| s <= t);
        if k == 0 {
            return 0.0;
        }
        if !self.continuous || k == self.nodes.len() {
            return self.cum[k - 1];
        }
        let (a, b) = (self.nodes[k - 1], self.nodes[k]);
        let (ca, cb) = (self.cum[k - 1], self.cum[k]);
        ca + (cb - ca) * (t - a) / (b - a)
    }

    /// `P(T* <= t | z) = 1 - exp(-Lambda(t | z))`.
    pub fn cdf(&self, t: f64) -> f64 {
        -(-self.cumulative(t)).exp_m1()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Failure time for a given unit-exponential variate.
    pub fn invert(&self, e: f64) -> f64 {
        let k = self.cum.partition_point(|&c| c < e);
        if k == self.cum.len() {
            return BEYOND_HORIZON;
        }
        if !self.continuous || k == 0 {
            return self.nodes[k];
        }
        let (a, b) = (self.nodes[k - 1], self.nodes[k]);
        let (ca, cb) = (self.cum[k - 1], self.cum[k]);
        if cb <= ca {
            return b;
        }
        a + (b - a) * (e - ca) / (cb - ca)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.invert(rng.sample(Exp1))
    }
}

/// Discrete sampler over the Breslow jump times for covariate path `z`.
pub fn conditional_survival_step(model: &FittedModel, z: &CovariatePath) -> SurvivalSampler {
    let theta = &model.theta_hat;
    let mut acc = 0.0;
    let cum = model
        .breslow
        .jump_times
        .iter()
        .zip(&model.breslow.jump_sizes)
        .map(|(&t, &d)| {
            acc += theta.linear_predictor(t, z).exp() * d;
            acc
        })
        .collect();
    SurvivalSampler {
        nodes: model.breslow.jump_times.clone(),
        cum,
        continuous: false,
    }
}

/// Continuous sampler from the smoothed hazard for covariate path `z`.
///
/// The integrand is integrated by the trapezoid rule on the hazard grid,
/// refined with exact nodes at the estimated change point and at the path's
/// breakpoints, where the integrand jumps.
pub fn conditional_survival_smooth(
    model: &FittedModel,
    z: &CovariatePath,
) -> Result<SurvivalSampler> {
    let smooth = model.smooth_hazard.as_ref().ok_or_else(|| {
        Error::InvalidInput("smoothed hazard has not been built for this model".into())
    })?;
    let tau = model.tau();
    let theta = &model.theta_hat;
    let mut extra: Vec<f64> = std::iter::once(theta.zeta)
        .chain(z.breakpoints().iter().copied())
        .filter(|&x| x > 0.0 && x < tau)
        .collect();
    extra.sort_by(f64::total_cmp);

    // Merge the hazard grid with the extra nodes.
    let grid = smooth.grid();
    let mut nodes: Vec<(f64, f64)> = Vec::with_capacity(smooth.values.len() + extra.len());
    let mut j = 0;
    for (t, v) in grid {
        while j < extra.len() && extra[j] <= t {
            if extra[j] < t {
                nodes.push((extra[j], smooth.value_at(extra[j])));
            }
            j += 1;
        }
        nodes.push((t, v));
    }

    let mut cum = Vec::with_capacity(nodes.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for w in nodes.windows(2) {
        let ((a, la), (b, lb)) = (w[0], w[1]);
        // coefficient and covariate are constant on the open interval
        let mid = 0.5 * (a + b);
        let tilt = dot(theta.coef_at(mid), z.value_at(mid)).exp();
        acc += tilt * 0.5 * (la + lb) * (b - a);
        cum.push(acc);
    }
    Ok(SurvivalSampler {
        nodes: nodes.into_iter().map(|n| n.0).collect(),
        cum,
        continuous: true,
    })
}

#[cfg(test)]
mod tests;
