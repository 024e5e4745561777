//! Gaussian-kernel smoothing of the Breslow increments.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{FittedModel, StepCumHazard};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Kernel weights beyond this many bandwidths are dropped (`exp(-50)`).
const KERNEL_REACH: f64 = 10.0;

/// Smoothed baseline hazard on a uniform grid over `[0, tau]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothHazard {
    pub tau: f64,
    pub grid_step: f64,
    pub bandwidth: f64,
    /// Hazard at `min(k * grid_step, tau)`, `k = 0, 1, ...`.
    pub values: Vec<f64>,
}

fn gauss(x: f64, h: f64) -> f64 {
    let u = x / h;
    if u.abs() > KERNEL_REACH {
        return 0.0;
    }
    (-0.5 * u * u).exp() / (h * (2.0 * std::f64::consts::PI).sqrt())
}

impl SmoothHazard {
    /// `lambda(t) = sum_k dLambda_k [K_h(t - s_k) + K_h(t + s_k) + K_h(2 tau - t - s_k)]`.
    pub fn from_increments(
        increments: &StepCumHazard,
        tau: f64,
        bandwidth: f64,
        grid_step: f64,
    ) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidInput(format!("bandwidth {bandwidth} must be positive")));
        }
        if !(grid_step > 0.0 && grid_step <= tau) {
            return Err(Error::InvalidInput(format!(
                "grid step {grid_step} must lie in (0, tau]"
            )));
        }
        let n_nodes = (tau / grid_step - 1e-9).ceil() as usize + 1;
        let mut values = vec![0.0; n_nodes];
        let node = |k: usize| (k as f64 * grid_step).min(tau);
        let reach = KERNEL_REACH * bandwidth;
        for (&s, &mass) in increments.jump_times.iter().zip(&increments.jump_sizes) {
            // the three images of the jump: s, -s and 2 tau - s
            for centre in [s, -s, 2.0 * tau - s] {
                let lo = ((centre - reach) / grid_step).floor().max(0.0) as usize;
                let hi = (((centre + reach) / grid_step).ceil().max(0.0) as usize).min(n_nodes - 1);
                for (k, v) in values.iter_mut().enumerate().take(hi + 1).skip(lo) {
                    *v += mass * gauss(node(k) - centre, bandwidth);
                }
            }
        }
        Ok(SmoothHazard {
            tau,
            grid_step,
            bandwidth,
            values,
        })
    }

    /// Linear interpolation of the grid values, clamped to `[0, tau]`.
    pub fn value_at(&self, t: f64) -> f64 {
        let last = self.values.len() - 1;
        if last == 0 {
            return self.values[0];
        }
        let x = (t / self.grid_step).clamp(0.0, last as f64);
        let k = (x.floor() as usize).min(last - 1);
        let a = k as f64 * self.grid_step;
        let b = ((k + 1) as f64 * self.grid_step).min(self.tau);
        let w = ((t.clamp(0.0, self.tau) - a) / (b - a)).clamp(0.0, 1.0);
        self.values[k] + w * (self.values[k + 1] - self.values[k])
    }

    /// `(t_k, lambda(t_k))` grid pairs.
    pub fn grid(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(k, &v)| ((k as f64 * self.grid_step).min(self.tau), v))
    }

    /// Trapezoid integral of the grid values over `[0, tau]`.
    pub fn integral(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self.grid().collect();
        pts.windows(2)
            .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
            .sum()
    }

    /// CSV with columns `time,hazard` on the grid.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        crate::io::write_xy_csv(out, ["time", "hazard"], self.grid())
    }
}

/// Normal-reference bandwidth `1.06 * sd * n_ev^(-1/5)` over observed event
/// times, with `sd` the sample standard deviation.
pub fn normal_reference_bandwidth(data: &Dataset) -> Result<f64> {
    let times: Vec<f64> = data
        .subjects()
        .iter()
        .filter(|s| s.event)
        .map(|s| s.observed_time)
        .collect();
    if times.is_empty() {
        return Err(Error::NoEvents);
    }
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let h = 1.06 * var.sqrt() * n.powf(-0.2);
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(
            "bandwidth rule needs at least two distinct event times".into(),
        ));
    }
    Ok(h)
}

/// Smooth the model's Breslow increments with the normal-reference bandwidth.
pub fn kernel_smooth_hazard(model: &FittedModel, grid_step: f64) -> Result<SmoothHazard> {
    let h = normal_reference_bandwidth(&model.data)?;
    SmoothHazard::from_increments(&model.breslow, model.tau(), h, grid_step)
}
