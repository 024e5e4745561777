//! Change-point Cox partial likelihood and its smallest-argmax maximizer.
//!
//! For a fixed change point `zeta` the log partial likelihood splits into an
//! `alpha` part (events at or before `zeta`) and a `beta` part (events after
//! `zeta`), each a concave standard Cox log-likelihood over its own events.
//! As a function of `zeta` it is a right-continuous step function that only
//! changes at event times, so profiling over `{zeta_lo} ∪ {event times in
//! (zeta_lo, zeta_hi]}` is exhaustive.

mod newton;
mod risk;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{ChangePointParams, Dataset};
use crate::error::{Error, Result};

pub use newton::BlockStatus;
pub(crate) use risk::RiskTable;

/// Relative tolerance under which two profile values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Settings for [`fit_mple`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileFitConfig {
    /// Closed search window `[lo, hi]` for the change point, clipped to `[0, tau]`.
    pub zeta_window: [f64; 2],
    #[serde(default = "default_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_max_iter")]
    pub newton_max_iter: usize,
    #[serde(default = "default_halving")]
    pub step_halving_max: usize,
}

fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    50
}
fn default_halving() -> usize {
    30
}

impl Default for ProfileFitConfig {
    fn default() -> Self {
        ProfileFitConfig {
            zeta_window: [0.0, f64::MAX],
            newton_tol: default_tol(),
            newton_max_iter: default_max_iter(),
            step_halving_max: default_halving(),
        }
    }
}

impl ProfileFitConfig {
    pub fn with_window(lo: f64, hi: f64) -> Self {
        ProfileFitConfig {
            zeta_window: [lo, hi],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.zeta_window;
        if !(lo < hi) || lo.is_nan() {
            return Err(Error::InvalidInput(format!(
                "zeta window [{lo}, {hi}] must have lo < hi"
            )));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 || self.step_halving_max == 0 {
            return Err(Error::InvalidInput("Newton settings must be positive".into()));
        }
        Ok(())
    }
}

/// Profiled fit at one change-point candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub zeta: f64,
    pub loglik: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub status: CandidateStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Converged,
    /// One side has no events; its coefficient is frozen at the standard Cox fit.
    Unidentified,
    /// Newton stopped at the iteration cap; the value is a lower bound.
    MaxIterations,
    /// Coefficients ran off to infinity; excluded from the argmax.
    Diverged,
}

impl CandidateStatus {
    fn combine(a: BlockStatus, b: BlockStatus) -> Self {
        use BlockStatus as B;
        match (a, b) {
            (B::Diverged, _) | (_, B::Diverged) => CandidateStatus::Diverged,
            (B::MaxIterations, _) | (_, B::MaxIterations) => CandidateStatus::MaxIterations,
            (B::Empty, _) | (_, B::Empty) => CandidateStatus::Unidentified,
            _ => CandidateStatus::Converged,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: ChangePointParams,
    pub loglik: f64,
    /// `false` when the winning candidate stopped at the iteration cap.
    pub converged: bool,
    pub profile_curve: Vec<ProfilePoint>,
}

/// Moment `S_{n,k}(t; gamma)` of the at-risk covariates.
#[derive(Clone, Debug, PartialEq)]
pub enum Moment {
    Zero(f64),
    One(DVector<f64>),
    Two(DMatrix<f64>),
}

/// `S_{n,k}(t; gamma) = n^{-1} sum_i Y_i(t) Z_i(t)^{⊗k} exp(gamma' Z_i(t))`.
pub fn s_nk(data: &Dataset, t: f64, gamma: &[f64], k: u8) -> Result<Moment> {
    let p = data.dim();
    if gamma.len() != p {
        return Err(Error::InvalidInput("gamma has the wrong dimension".into()));
    }
    let at_risk = data.risk_set(t);
    if at_risk.is_empty() {
        return Err(Error::EmptyRiskSet { t });
    }
    let n = data.len() as f64;
    let mut s0 = 0.0;
    let mut s1 = DVector::zeros(p);
    let mut s2 = DMatrix::zeros(p, p);
    for j in at_risk {
        let z = DVector::from_column_slice(data.subjects()[j].covariates.value_at(t));
        let w = z.dot(&DVector::from_column_slice(gamma)).exp();
        s0 += w;
        if k >= 1 {
            s1 += &z * w;
        }
        if k >= 2 {
            s2 += &z * z.transpose() * w;
        }
    }
    Ok(match k {
        0 => Moment::Zero(s0 / n),
        1 => Moment::One(s1 / n),
        2 => Moment::Two(s2 / n),
        _ => return Err(Error::InvalidInput(format!("moment order {k} not in 0..=2"))),
    })
}

fn check_params(data: &Dataset, theta: &ChangePointParams) -> Result<()> {
    if theta.alpha.len() != data.dim() || theta.beta.len() != data.dim() {
        return Err(Error::InvalidInput(
            "coefficient dimension does not match the covariates".into(),
        ));
    }
    if data.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    Ok(())
}

/// Log partial likelihood `l_n(alpha, beta, zeta)`.
pub fn log_partial_likelihood(data: &Dataset, theta: &ChangePointParams) -> Result<f64> {
    check_params(data, theta)?;
    let table = RiskTable::new(data);
    let s = table.split(theta.zeta);
    let e = table.n_times();
    Ok(table.eval_block(0, s, &theta.alpha).loglik + table.eval_block(s, e, &theta.beta).loglik)
}

/// Gradient and Hessian of the log partial likelihood in `(alpha, beta)` at
/// fixed `zeta`. The Hessian is block diagonal.
pub fn score_and_hessian(
    data: &Dataset,
    theta: &ChangePointParams,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_params(data, theta)?;
    let p = data.dim();
    let table = RiskTable::new(data);
    let s = table.split(theta.zeta);
    let a = table.eval_block(0, s, &theta.alpha);
    let b = table.eval_block(s, table.n_times(), &theta.beta);
    let grad = DVector::from_iterator(2 * p, a.grad.iter().chain(&b.grad).copied());
    let mut hess = DMatrix::zeros(2 * p, 2 * p);
    for i in 0..p {
        for j in 0..p {
            hess[(i, j)] = a.hess[i * p + j];
            hess[(p + i, p + j)] = b.hess[i * p + j];
        }
    }
    Ok((grad, hess))
}

/// Standard Cox fit (`alpha = beta`): coefficient and maximized log PL.
pub fn cox_fit(data: &Dataset, cfg: &ProfileFitConfig) -> Result<(Vec<f64>, f64)> {
    if data.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    let table = RiskTable::new(data);
    let fit = newton::maximize_block(&table, 0, table.n_times(), &vec![0.0; data.dim()], cfg);
    match fit.status {
        BlockStatus::Converged => Ok((fit.coef, fit.loglik)),
        other => Err(Error::NonConvergence(format!("standard Cox fit: {other:?}"))),
    }
}

/// Smallest-argmax maximum partial likelihood estimator over the window.
pub fn fit_mple(data: &Dataset, cfg: &ProfileFitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if data.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    let table = RiskTable::new(data);
    fit_table(&table, data.tau(), cfg)
}

pub(crate) fn fit_table(table: &RiskTable, tau: f64, cfg: &ProfileFitConfig) -> Result<FitResult> {
    let p = table.p;
    let n_times = table.n_times();
    let lo = cfg.zeta_window[0].max(0.0);
    let hi = cfg.zeta_window[1].min(tau);
    if lo > hi {
        return Err(Error::InvalidInput(format!(
            "window [{lo}, {hi}] does not intersect [0, tau]"
        )));
    }

    // (zeta, split index) in ascending order
    let mut candidates = vec![(lo, table.split(lo))];
    candidates.extend(
        table
            .times
            .iter()
            .enumerate()
            .filter(|(_, &t)| t > lo && t <= hi)
            .map(|(e, &t)| (t, e + 1)),
    );

    let cox = newton::maximize_block(table, 0, n_times, &vec![0.0; p], cfg);
    let anchor = if cox.status == BlockStatus::Converged {
        cox.coef
    } else {
        vec![0.0; p]
    };

    // alpha side: events before the split, warm-started in ascending order
    let alpha_fits: Vec<_> = warm_pass(candidates.iter().map(|c| (0, c.1)), table, &anchor, cfg);
    // beta side: events after the split, warm-started in descending order
    let mut beta_fits =
        warm_pass(candidates.iter().rev().map(|c| (c.1, n_times)), table, &anchor, cfg);
    beta_fits.reverse();

    let profile_curve: Vec<ProfilePoint> = candidates
        .iter()
        .zip(alpha_fits.into_iter().zip(beta_fits))
        .map(|(&(zeta, _), (a, b))| ProfilePoint {
            zeta,
            loglik: a.loglik + b.loglik,
            status: CandidateStatus::combine(a.status, b.status),
            alpha: a.coef,
            beta: b.coef,
        })
        .collect();

    // Ascending scan; a later candidate must beat the incumbent by more than
    // rounding noise, so exact plateau ties resolve to the smallest zeta.
    let mut best: Option<&ProfilePoint> = None;
    for point in &profile_curve {
        if point.status == CandidateStatus::Diverged {
            continue;
        }
        if best.is_none_or(|b| point.loglik > b.loglik + TIE_TOLERANCE * (1.0 + b.loglik.abs())) {
            best = Some(point);
        }
    }
    let best = best.ok_or_else(|| {
        Error::NonConvergence("every change-point candidate diverged".into())
    })?;
    Ok(FitResult {
        theta_hat: ChangePointParams::new(best.alpha.clone(), best.beta.clone(), best.zeta),
        loglik: best.loglik,
        converged: best.status != CandidateStatus::MaxIterations,
        profile_curve,
    })
}

/// Fit a sequence of nested blocks, each warm-started by linear extrapolation
/// from the two previous optima.
fn warm_pass(
    blocks: impl Iterator<Item = (usize, usize)>,
    table: &RiskTable,
    anchor: &[f64],
    cfg: &ProfileFitConfig,
) -> Vec<newton::BlockFit> {
    let mut fits: Vec<newton::BlockFit> = Vec::new();
    let mut prev: Option<(Vec<f64>, (usize, usize))> = None;
    let mut prev2: Option<(Vec<f64>, (usize, usize))> = None;
    for block in blocks {
        let start = match (&prev, &prev2) {
            (Some((c1, b1)), Some((c2, b2))) if b1 != b2 && *b1 != block => {
                c1.iter().zip(c2).map(|(a, b)| 2.0 * a - b).collect()
            }
            (Some((c1, _)), _) => c1.clone(),
            _ => anchor.to_vec(),
        };
        let fit = newton::maximize_block(table, block.0, block.1, &start, cfg);
        match fit.status {
            BlockStatus::Converged | BlockStatus::MaxIterations => {
                prev2 = prev.take();
                prev = Some((fit.coef.clone(), block));
            }
            BlockStatus::Empty | BlockStatus::Diverged => {
                prev = None;
                prev2 = None;
            }
        }
        fits.push(fit);
    }
    fits
}
