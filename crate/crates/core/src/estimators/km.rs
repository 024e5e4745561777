//! Kaplan–Meier estimators, stratified by constant categorical covariates.

use std::io::Write;

use log::debug;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Default cap on the number of censoring strata.
pub const DEFAULT_MAX_STRATA: usize = 32;

/// Right-continuous product-limit survival curve. `survival[k]` holds on
/// `[times[k], times[k+1])`, and the curve is 1 before `times[0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
}

impl KmCurve {
    pub fn survival_at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => 1.0,
            k => self.survival[k - 1],
        }
    }

    /// CSV with columns `time,survival`, starting from `(0, 1)`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = std::iter::once((0.0, 1.0))
            .chain(self.times.iter().copied().zip(self.survival.iter().copied()));
        crate::io::write_xy_csv(out, ["time", "survival"], rows)
    }
}

/// Product-limit estimator from `(time, is_event)` pairs; the risk set at `t`
/// is every observation with time `>= t`.
pub fn kaplan_meier(obs: &[(f64, bool)]) -> KmCurve {
    let mut sorted = obs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut times = Vec::new();
    let mut survival = Vec::new();
    let n = sorted.len();
    let mut s = 1.0;
    // until the first censored observation the curve is the empirical
    // survival, kept as an exact ratio
    let mut uncensored = true;
    let mut i = 0;
    while i < n {
        let t = sorted[i].0;
        let at_risk = (n - i) as f64;
        let start = i;
        let mut events = 0usize;
        while i < n && sorted[i].0 == t {
            events += usize::from(sorted[i].1);
            i += 1;
        }
        if events > 0 {
            s = if uncensored {
                (at_risk - events as f64) / n as f64
            } else {
                s * (1.0 - events as f64 / at_risk)
            };
            times.push(t);
            survival.push(s);
        }
        uncensored &= events == i - start;
    }
    KmCurve { times, survival }
}

/// Censoring-time survival `G(t | z)` per covariate level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensoringEstimate {
    pub tau: f64,
    /// `(level, curve)` sorted lexicographically by level.
    pub strata: Vec<(Vec<f64>, KmCurve)>,
}

impl CensoringEstimate {
    pub fn stratum(&self, z: &[f64]) -> Result<&KmCurve> {
        self.strata
            .iter()
            .find(|(level, _)| level.as_slice() == z)
            .map(|(_, curve)| curve)
            .ok_or_else(|| Error::UnknownStratum(z.to_vec()))
    }
}

/// Group subjects by constant categorical covariate level.
fn stratify(data: &Dataset, max_strata: usize) -> Result<Vec<(Vec<f64>, Vec<(f64, bool)>)>> {
    if !data.has_constant_covariates() {
        return Err(Error::NonCategorical(
            "stratification needs time-constant covariates".into(),
        ));
    }
    let mut strata: Vec<(Vec<f64>, Vec<(f64, bool)>)> = Vec::new();
    for s in data.subjects() {
        let z = s.covariates.value_at(0.0);
        match strata.iter_mut().find(|(level, _)| level.as_slice() == z) {
            Some((_, obs)) => obs.push((s.observed_time, s.event)),
            None => {
                if strata.len() == max_strata {
                    return Err(Error::NonCategorical(format!(
                        "more than {max_strata} distinct covariate levels"
                    )));
                }
                strata.push((z.to_vec(), vec![(s.observed_time, s.event)]));
            }
        }
    }
    strata.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(strata)
}

/// Kaplan–Meier estimator of the censoring law per level: censorings are
/// the events and failures the censored observations.
pub fn km_censoring(data: &Dataset, max_strata: usize) -> Result<CensoringEstimate> {
    let strata = stratify(data, max_strata)?
        .into_iter()
        .map(|(level, obs)| {
            let flipped: Vec<(f64, bool)> = obs.into_iter().map(|(t, e)| (t, !e)).collect();
            (level, kaplan_meier(&flipped))
        })
        .collect();
    Ok(CensoringEstimate {
        tau: data.tau(),
        strata,
    })
}

/// Kaplan–Meier curves of the observed times per level, failures as events.
pub fn km_curves(data: &Dataset, max_strata: usize) -> Result<Vec<(Vec<f64>, KmCurve)>> {
    Ok(stratify(data, max_strata)?
        .into_iter()
        .map(|(level, obs)| (level, kaplan_meier(&obs)))
        .collect())
}

/// Draw `C*` from `G(. | z)`, optionally conditional on `C* > lower_bound`.
///
/// Mass the curve leaves above its last time goes to `tau`; so does a
/// conditional draw with no mass above the bound.
pub fn sample_censoring<R: Rng + ?Sized>(
    est: &CensoringEstimate,
    z: &[f64],
    lower_bound: Option<f64>,
    rng: &mut R,
) -> Result<f64> {
    let curve = est.stratum(z)?;
    let tail = lower_bound.map_or(1.0, |l| curve.survival_at(l));
    if tail <= 0.0 {
        debug!("no censoring mass above {lower_bound:?} for level {z:?}; using tau");
        return Ok(est.tau);
    }
    // survival target in [0, tail)
    let v = rng.random::<f64>() * tail;
    let k = curve.survival.partition_point(|&s| s > v);
    Ok(curve.times.get(k).copied().unwrap_or(est.tau))
}
