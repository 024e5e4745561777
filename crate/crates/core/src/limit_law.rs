//! Sampler for the asymptotic law of the rescaled MPLE.
//!
//! The regular parts are Gaussian, `phi_alpha ~ N(0, I_alpha^-1)` and
//! `phi_beta ~ N(0, I_beta^-1)`. The change-point part is the smallest
//! argmax of a two-sided compound Poisson process `W(h)`: to the left of
//! the origin jumps arrive at rate `gamma_minus` with increments
//! `log r(zeta0; alpha0, beta0) + delta' v-`, to the right at rate
//! `gamma_plus` with increments `log r(zeta0; beta0, alpha0) - delta' v+`,
//! where `delta = beta0 - alpha0` and `v+-` are the covariate values at
//! `zeta0` tilted by the at-risk exponential weights.
//!
//! `W` is piecewise constant. Its plateaus are indexed like the
//! change-point candidates of the partial likelihood, so a plateau's argmax
//! is its left end: left plateau `k` (after `k` left arrivals) starts at
//! `-s_{k+1}` and right plateau `k` at the `k`-th right arrival.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::dot;
use crate::error::{Error, Result};
use crate::likelihood::TIE_TOLERANCE;
use crate::rng;
use crate::simulate::{CovariateLevel, ScenarioConfig};

/// Default quadrature step for the information integrals, as a fraction of `tau`.
pub const DEFAULT_QUADRATURE_DIVISIONS: usize = 8192;

/// Maximum number of window doublings before giving up on a draw.
pub const MAX_DOUBLINGS: u32 = 10;

/// Scale of the default window relative to the slower one-sided drift.
const WINDOW_SCALE: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitLawConfig {
    /// Left jump intensity `s0(zeta0; alpha0) lambda0(zeta0-)`.
    pub gamma_minus: f64,
    /// Right jump intensity `s0(zeta0; beta0) lambda0(zeta0)`.
    pub gamma_plus: f64,
    /// `log r(zeta0; alpha0, beta0)`.
    pub log_r_left: f64,
    /// `log r(zeta0; beta0, alpha0)`.
    pub log_r_right: f64,
    pub jump_law_minus: Vec<CovariateLevel>,
    pub jump_law_plus: Vec<CovariateLevel>,
    /// `beta0 - alpha0`.
    pub delta: Vec<f64>,
    /// `int_0^zeta0 Q(s; alpha0) s0(s; alpha0) lambda0(s) ds`, row-major.
    pub info_alpha: Vec<Vec<f64>>,
    /// `int_zeta0^tau Q(s; beta0) s0(s; beta0) lambda0(s) ds`, row-major.
    pub info_beta: Vec<Vec<f64>>,
    /// Initial half-width `H` of the simulation window.
    pub window_half_width: f64,
}

impl LimitLawConfig {
    pub fn dim(&self) -> usize {
        self.delta.len()
    }

    pub fn increment_left(&self, v: &[f64]) -> f64 {
        self.log_r_left + dot(&self.delta, v)
    }

    pub fn increment_right(&self, v: &[f64]) -> f64 {
        self.log_r_right - dot(&self.delta, v)
    }

    /// Expected change of `W` per unit of `|h|` moving left from the origin.
    pub fn drift_minus(&self) -> f64 {
        self.gamma_minus * expectation(&self.jump_law_minus, |v| self.increment_left(v))
    }

    /// Expected change of `W` per unit of `h` moving right from the origin.
    pub fn drift_plus(&self) -> f64 {
        self.gamma_plus * expectation(&self.jump_law_plus, |v| self.increment_right(v))
    }

    /// `20 / min(|drift-|, |drift+|)`.
    pub fn default_window_half_width(&self) -> f64 {
        WINDOW_SCALE / self.drift_minus().abs().min(self.drift_plus().abs())
    }

    /// Checks that the config defines a proper law with a finite argmax:
    /// positive intensities, probability vectors, symmetric positive definite
    /// information matrices and strictly negative drift on both sides.
    pub fn validate(&self) -> Result<()> {
        let p = self.dim();
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        for g in [self.gamma_minus, self.gamma_plus] {
            if !(g.is_finite() && g > 0.0) {
                return bad("jump intensities must be positive");
            }
        }
        if !(self.log_r_left.is_finite() && self.log_r_right.is_finite()) {
            return bad("log ratios must be finite");
        }
        for law in [&self.jump_law_minus, &self.jump_law_plus] {
            if law.is_empty() || law.iter().any(|a| a.value.len() != p || !(a.prob >= 0.0)) {
                return bad("jump law atoms must be p-vectors with nonnegative mass");
            }
            let total: f64 = law.iter().map(|a| a.prob).sum();
            if (total - 1.0).abs() > 1e-9 {
                return bad("jump law probabilities must sum to 1");
            }
        }
        for info in [&self.info_alpha, &self.info_beta] {
            cholesky(info, p)?;
        }
        if !(self.window_half_width.is_finite() && self.window_half_width > 0.0) {
            return bad("window half-width must be positive");
        }
        let (dm, dp) = (self.drift_minus(), self.drift_plus());
        if !(dm < 0.0 && dp < 0.0) {
            return Err(Error::InvalidInput(format!(
                "jump process needs negative drift on both sides (left {dm}, right {dp})"
            )));
        }
        Ok(())
    }
}

fn expectation(law: &[CovariateLevel], f: impl Fn(&[f64]) -> f64) -> f64 {
    law.iter().map(|a| a.prob * f(&a.value)).sum()
}

fn cholesky(m: &[Vec<f64>], p: usize) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if m.len() != p || m.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidInput("information matrix must be p x p".into()));
    }
    let mat = DMatrix::from_fn(p, p, |i, j| m[i][j]);
    let scale = mat.amax().max(f64::MIN_POSITIVE);
    if (&mat - mat.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidInput("information matrix is not symmetric".into()));
    }
    mat.cholesky()
        .ok_or_else(|| Error::InvalidInput("information matrix is not positive definite".into()))
}

/// Exact at-risk moments of the scenario's population.
struct Population<'a> {
    cfg: &'a ScenarioConfig,
    profiles: Vec<crate::simulate::HazardProfile>,
}

impl<'a> Population<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Self {
        let profiles = cfg
            .covariate_law
            .iter()
            .map(|l| cfg.hazard_profile(&l.value))
            .collect();
        Population { cfg, profiles }
    }

    /// `P(T~ >= t | z_l)` for level `l`: continuous `T`, censoring
    /// `min(Exp(c), tau)`.
    fn at_risk(&self, l: usize, t: f64) -> f64 {
        self.profiles[l].survival(t) * (-self.cfg.censoring_rate * t).exp()
    }

    /// Tilted at-risk weights `P(Z = z_l) P(T~ >= t | z_l) exp(gamma' z_l)`.
    fn weights(&self, t: f64, gamma: &[f64]) -> Vec<f64> {
        self.cfg
            .covariate_law
            .iter()
            .enumerate()
            .map(|(l, lev)| lev.prob * self.at_risk(l, t) * dot(gamma, &lev.value).exp())
            .collect()
    }

    fn s0(&self, t: f64, gamma: &[f64]) -> f64 {
        self.weights(t, gamma).iter().sum()
    }

    /// `Q(t; gamma) s0(t; gamma) = s2 - s1 s1' / s0`.
    fn q_s0(&self, t: f64, gamma: &[f64]) -> DMatrix<f64> {
        let p = self.cfg.dim();
        let w = self.weights(t, gamma);
        let mut s0 = 0.0;
        let mut s1 = DVector::zeros(p);
        let mut s2 = DMatrix::zeros(p, p);
        for (wl, lev) in w.iter().zip(&self.cfg.covariate_law) {
            let z = DVector::from_column_slice(&lev.value);
            s0 += wl;
            s1 += &z * *wl;
            s2 += &z * z.transpose() * *wl;
        }
        if s0 <= 0.0 {
            return DMatrix::zeros(p, p);
        }
        s2 - &s1 * s1.transpose() / s0
    }

    fn jump_law(&self, t: f64, gamma: &[f64]) -> Vec<CovariateLevel> {
        let w = self.weights(t, gamma);
        let total: f64 = w.iter().sum();
        w.iter()
            .zip(&self.cfg.covariate_law)
            .map(|(wl, lev)| CovariateLevel {
                value: lev.value.clone(),
                prob: wl / total,
            })
            .collect()
    }

    /// Trapezoid rule for `int_a^b Q s0 lambda0` with nodes on the
    /// `step` grid plus every baseline breakpoint inside `(a, b)`.
    fn information(&self, a: f64, b: f64, gamma: &[f64], step: f64) -> DMatrix<f64> {
        let base = &self.cfg.baseline_hazard;
        let mut nodes: Vec<f64> = (0..)
            .map(|k| k as f64 * step)
            .take_while(|&t| t < b)
            .filter(|&t| t > a)
            .chain([a, b])
            .chain(base.breakpoints.iter().copied().filter(|&x| x > a && x < b))
            .collect();
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let p = self.cfg.dim();
        let mut acc = DMatrix::zeros(p, p);
        let mut left = self.q_s0(nodes[0], gamma);
        for w in nodes.windows(2) {
            let right = self.q_s0(w[1], gamma);
            // the baseline is constant on each open piece
            let rate = base.rate_at(0.5 * (w[0] + w[1]));
            acc += (&left + &right) * (0.5 * rate * (w[1] - w[0]));
            left = right;
        }
        acc
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Limit-law ingredients of a simulation scenario, from exact sums over the
/// covariate levels and trapezoid quadrature for the information integrals.
///
/// The window half-width is set to
/// [`default_window_half_width`](LimitLawConfig::default_window_half_width);
/// it is infinite when there is no change point.
pub fn derive_limit_config(cfg: &ScenarioConfig, quadrature_step: f64) -> Result<LimitLawConfig> {
    if cfg.covariate_law.is_empty() {
        return Err(Error::NonDiscreteCovariates(
            "covariate law has no atoms".into(),
        ));
    }
    cfg.validate_model()?;
    if !(quadrature_step.is_finite() && quadrature_step > 0.0) {
        return Err(Error::InvalidInput("quadrature step must be positive".into()));
    }
    let pop = Population::new(cfg);
    let z0 = cfg.zeta0;
    let base = &cfg.baseline_hazard;
    let lambda_left = base.rates[base.breakpoints.partition_point(|&b| b < z0)];
    let lambda_right = base.rate_at(z0);
    let s0_alpha = pop.s0(z0, &cfg.alpha0);
    let s0_beta = pop.s0(z0, &cfg.beta0);
    let log_r_left = if cfg.alpha0 == cfg.beta0 {
        0.0
    } else {
        s0_alpha.ln() - s0_beta.ln()
    };
    let mut c = LimitLawConfig {
        gamma_minus: s0_alpha * lambda_left,
        gamma_plus: s0_beta * lambda_right,
        log_r_left,
        log_r_right: -log_r_left,
        jump_law_minus: pop.jump_law(z0, &cfg.alpha0),
        jump_law_plus: pop.jump_law(z0, &cfg.beta0),
        delta: cfg.beta0.iter().zip(&cfg.alpha0).map(|(b, a)| b - a).collect(),
        info_alpha: to_rows(&pop.information(0.0, z0, &cfg.alpha0, quadrature_step)),
        info_beta: to_rows(&pop.information(z0, cfg.tau, &cfg.beta0, quadrature_step)),
        window_half_width: 0.0,
    };
    c.window_half_width = c.default_window_half_width();
    Ok(c)
}

/// One realization of the jump process on `[-H, H]`.
///
/// Left arrivals are stored as positive distances `s_k`; `left_next` is the
/// first left arrival beyond `H`, which closes the outermost left plateau.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpPath {
    pub left_times: Vec<f64>,
    /// `W` after `k + 1` left jumps.
    pub left_levels: Vec<f64>,
    pub right_times: Vec<f64>,
    /// `W` after `k + 1` right jumps.
    pub right_levels: Vec<f64>,
    pub left_next: f64,
}

impl JumpPath {
    /// Left end of plateau `k` on the left (`k = 0` is the origin plateau).
    fn left_end(&self, k: usize) -> f64 {
        -self.left_times.get(k).copied().unwrap_or(self.left_next)
    }

    /// Value of `W` on the plateau starting at `h`.
    pub fn level_at(&self, h: f64) -> f64 {
        if h < 0.0 {
            let k = self.left_times.partition_point(|&s| s < -h);
            if k == 0 { 0.0 } else { self.left_levels[k - 1] }
        } else {
            let k = self.right_times.partition_point(|&t| t <= h);
            if k == 0 { 0.0 } else { self.right_levels[k - 1] }
        }
    }

    /// Left end of the leftmost plateau attaining `sup W`.
    pub fn sargmax(&self) -> f64 {
        let candidates = std::iter::once((0.0, self.left_end(0)))
            .chain(
                self.left_levels
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| (v, self.left_end(k + 1))),
            )
            .chain(self.right_levels.iter().copied().zip(self.right_times.iter().copied()));
        let all: Vec<(f64, f64)> = candidates.collect();
        let sup = all.iter().fold(f64::NEG_INFINITY, |m, c| m.max(c.0));
        let floor = sup - TIE_TOLERANCE * (1.0 + sup.abs());
        all.iter()
            .filter(|c| c.0 >= floor)
            .map(|c| c.1)
            .fold(f64::INFINITY, f64::min)
    }
}

fn draw_atom<'a, R: Rng + ?Sized>(law: &'a [CovariateLevel], rng: &mut R) -> &'a [f64] {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for a in law {
        acc += a.prob;
        if u < acc {
            return &a.value;
        }
    }
    &law.last().expect("nonempty jump law").value
}

/// Simulate the jump process event by event on `[-half_width, half_width]`.
pub fn sample_jump_path<R: Rng + ?Sized>(
    cfg: &LimitLawConfig,
    half_width: f64,
    rng: &mut R,
) -> JumpPath {
    let mut left_times = Vec::new();
    let mut left_levels = Vec::new();
    let mut s = 0.0;
    let mut level = 0.0;
    let left_next = loop {
        s += rng.sample::<f64, _>(Exp1) / cfg.gamma_minus;
        if s > half_width {
            break s;
        }
        level += cfg.increment_left(draw_atom(&cfg.jump_law_minus, rng));
        left_times.push(s);
        left_levels.push(level);
    };
    let mut right_times = Vec::new();
    let mut right_levels = Vec::new();
    let mut t = 0.0;
    level = 0.0;
    loop {
        t += rng.sample::<f64, _>(Exp1) / cfg.gamma_plus;
        if t > half_width {
            break;
        }
        level += cfg.increment_right(draw_atom(&cfg.jump_law_plus, rng));
        right_times.push(t);
        right_levels.push(level);
    }
    JumpPath {
        left_times,
        left_levels,
        right_times,
        right_levels,
        left_next,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitDraw {
    pub phi_alpha: Vec<f64>,
    pub phi_beta: Vec<f64>,
    pub phi_zeta: f64,
}

/// `N(0, info^-1)` via the Cholesky factor `info = L L'`: `phi = L'^-1 e`.
fn gaussian<R: Rng + ?Sized>(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>, rng: &mut R) -> Vec<f64> {
    let p = chol.l_dirty().nrows();
    let e = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let lt = chol.l().transpose();
    lt.solve_upper_triangular(&e)
        .expect("Cholesky factor has a positive diagonal")
        .iter()
        .copied()
        .collect()
}

/// One draw of `(phi_alpha, phi_beta, phi_zeta)`.
///
/// `phi_zeta` is redrawn on a doubled window whenever it falls within
/// `H / 2` of the window boundary.
pub fn sample_limit<R: Rng + ?Sized>(cfg: &LimitLawConfig, rng: &mut R) -> Result<LimitDraw> {
    cfg.validate()?;
    draw_validated(cfg, rng)
}

fn draw_validated<R: Rng + ?Sized>(cfg: &LimitLawConfig, rng: &mut R) -> Result<LimitDraw> {
    let p = cfg.dim();
    let phi_alpha = gaussian(&cholesky(&cfg.info_alpha, p)?, rng);
    let phi_beta = gaussian(&cholesky(&cfg.info_beta, p)?, rng);
    let mut h = cfg.window_half_width;
    for _ in 0..=MAX_DOUBLINGS {
        let phi_zeta = sample_jump_path(cfg, h, rng).sargmax();
        if phi_zeta.abs() <= 0.5 * h {
            return Ok(LimitDraw {
                phi_alpha,
                phi_beta,
                phi_zeta,
            });
        }
        h *= 2.0;
    }
    Err(Error::WindowExhausted {
        doublings: MAX_DOUBLINGS,
        half_width: h / 2.0,
    })
}

/// `count` independent draws; draw `i` uses stream `(seed, i)`.
pub fn sample_limit_batch(cfg: &LimitLawConfig, count: usize, seed: u64) -> Result<Vec<LimitDraw>> {
    cfg.validate()?;
    (0..count)
        .into_par_iter()
        .map(|i| draw_validated(cfg, &mut rng::stream(seed, &[i as u64])))
        .collect()
}

/// CSV with columns `phi_zeta,phi_alpha_1..p,phi_beta_1..p`.
pub fn write_limit_draws<W: Write>(draws: &[LimitDraw], out: W) -> Result<()> {
    let p = draws.first().map_or(0, |d| d.phi_alpha.len());
    let mut wtr = csv::Writer::from_writer(out);
    let header: Vec<String> = std::iter::once("phi_zeta".to_string())
        .chain((1..=p).map(|k| format!("phi_alpha_{k}")))
        .chain((1..=p).map(|k| format!("phi_beta_{k}")))
        .collect();
    wtr.write_record(&header)?;
    for d in draws {
        let row: Vec<String> = std::iter::once(d.phi_zeta)
            .chain(d.phi_alpha.iter().copied())
            .chain(d.phi_beta.iter().copied())
            .map(|x| x.to_string())
            .collect();
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
