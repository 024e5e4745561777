//! Damped Newton ascent for one coefficient block.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::risk::{BlockEval, RiskTable};
use super::ProfileFitConfig;

/// Coefficients beyond this magnitude whose gradient still points outward
/// are treated as a divergent fit.
pub(crate) const DIVERGENCE_BOUND: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockStatus {
    Converged,
    /// No events in the block; the coefficient is not identified.
    Empty,
    MaxIterations,
    Diverged,
}

#[derive(Clone, Debug)]
pub(crate) struct BlockFit {
    pub coef: Vec<f64>,
    pub loglik: f64,
    pub status: BlockStatus,
}

/// Solve `(-hess) d = grad`, ridging the system if it is not positive definite.
fn newton_direction(eval: &BlockEval, p: usize) -> Vec<f64> {
    if p == 1 {
        let (g, h, t) = (eval.grad[0], eval.hess[0], eval.third);
        let info = -h;
        if info > 1e-12 && (g * t).abs() < 0.5 * h * h {
            // Halley step
            return vec![-2.0 * g * h / (2.0 * h * h - g * t)];
        }
        let info = if info > 1e-12 { info } else { info.max(0.0) + 1e-8 };
        return vec![g / info];
    }
    let info = -DMatrix::from_row_slice(p, p, &eval.hess);
    let g = DVector::from_column_slice(&eval.grad);
    let scale = (0..p).map(|i| info[(i, i)].abs()).fold(1.0, f64::max);
    let mut ridge = 0.0;
    for _ in 0..20 {
        let m = &info + DMatrix::identity(p, p) * ridge;
        if let Some(chol) = m.cholesky() {
            return chol.solve(&g).iter().copied().collect();
        }
        ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 10.0 };
    }
    // Gradient ascent as a last resort.
    eval.grad.iter().map(|g| g / scale).collect()
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximize the block log-likelihood of events `lo..hi` starting at `start`.
///
/// Full Newton steps are accepted when they do not lower the log-likelihood
/// beyond rounding; otherwise the step is halved until it does not decrease.
/// Convergence is declared on the gradient sup-norm.
pub(crate) fn maximize_block(
    table: &RiskTable,
    lo: usize,
    hi: usize,
    start: &[f64],
    cfg: &ProfileFitConfig,
) -> BlockFit {
    if lo >= hi {
        return BlockFit {
            coef: start.to_vec(),
            loglik: 0.0,
            status: BlockStatus::Empty,
        };
    }
    let p = table.p;
    let mut coef = start.to_vec();
    let mut cur = table.eval_block(lo, hi, &coef);
    let mut status = BlockStatus::MaxIterations;
    for _ in 0..cfg.newton_max_iter {
        let gnorm = sup_norm(&cur.grad);
        if gnorm < cfg.newton_tol {
            status = BlockStatus::Converged;
            break;
        }
        let dir = newton_direction(&cur, p);
        let trial: Vec<f64> = coef.iter().zip(&dir).map(|(c, d)| c + d).collect();
        let eval = table.eval_block(lo, hi, &trial);
        // near the optimum the log-likelihood is flat to rounding, so a
        // shrinking gradient also admits a step that loses only that much
        let slack = 1e-10 * (1.0 + cur.loglik.abs());
        let accepted = if eval.loglik.is_finite()
            && eval.grad.iter().all(|g| g.is_finite())
            && (eval.loglik >= cur.loglik || (sup_norm(&eval.grad) < gnorm && eval.loglik >= cur.loglik - slack))
        {
            Some((trial, eval))
        } else {
            line_search(table, lo, hi, &coef, cur.loglik, &dir, cfg)
        };
        let Some((trial, eval)) = accepted else {
            break;
        };
        coef = trial;
        cur = eval;
        // past the bound and still climbing outward
        let outward: f64 = coef.iter().zip(&cur.grad).map(|(c, g)| c * g).sum();
        if sup_norm(&coef) > DIVERGENCE_BOUND && outward > 0.0 {
            status = BlockStatus::Diverged;
            break;
        }
    }
    if status == BlockStatus::MaxIterations && sup_norm(&cur.grad) < cfg.newton_tol {
        status = BlockStatus::Converged;
    }
    BlockFit {
        loglik: cur.loglik,
        coef,
        status,
    }
}

/// Step halving along `dir` until the log-likelihood does not decrease.
fn line_search(
    table: &RiskTable,
    lo: usize,
    hi: usize,
    coef: &[f64],
    base: f64,
    dir: &[f64],
    cfg: &ProfileFitConfig,
) -> Option<(Vec<f64>, BlockEval)> {
    let slack = 1e-13 * (1.0 + base.abs());
    let mut step = 1.0;
    for _ in 0..=cfg.step_halving_max {
        let trial: Vec<f64> = coef.iter().zip(dir).map(|(c, d)| c + step * d).collect();
        let eval = table.eval_block(lo, hi, &trial);
        if eval.loglik.is_finite() && eval.loglik >= base - slack {
            return Some((trial, eval));
        }
        step *= 0.5;
    }
    None
}
