//! Brute-force references shared by the integration tests.
#![allow(dead_code)]

use cpcox::simulate::{sample_dataset, ScenarioConfig};
use cpcox::{Dataset, Subject};
use rand::Rng;
use rand_distr::StandardNormal;

/// One event block of the log partial likelihood, one subject at a time:
/// events with `in_block(t)` contribute `c z_i - log sum_{j at risk} exp(c z_j)`.
pub fn naive_block(data: &Dataset, coef: f64, in_block: impl Fn(f64) -> bool) -> f64 {
    let subjects = data.subjects();
    let mut total = 0.0;
    for s in subjects.iter().filter(|s| s.event && in_block(s.observed_time)) {
        let t = s.observed_time;
        let z = s.covariates.value_at(t)[0];
        let denom: f64 = subjects
            .iter()
            .filter(|r| r.observed_time >= t)
            .map(|r| (coef * r.covariates.value_at(t)[0]).exp())
            .sum();
        total += coef * z - denom.ln();
    }
    total
}

/// Golden-section maximizer of a unimodal function on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > 1e-9 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// True when the block has no finite maximizer: every event carries the
/// largest (or every event the smallest) covariate of its risk set, and at
/// least one risk set has more than one distinct value.
pub fn block_diverges(data: &Dataset, in_block: impl Fn(f64) -> bool) -> bool {
    let subjects = data.subjects();
    let (mut all_max, mut all_min, mut flat) = (true, true, true);
    for s in subjects.iter().filter(|s| s.event && in_block(s.observed_time)) {
        let t = s.observed_time;
        let z = s.covariates.value_at(t)[0];
        let risk: Vec<f64> = subjects
            .iter()
            .filter(|r| r.observed_time >= t)
            .map(|r| r.covariates.value_at(t)[0])
            .collect();
        let hi = risk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = risk.iter().copied().fold(f64::INFINITY, f64::min);
        all_max &= z == hi;
        all_min &= z == lo;
        flat &= hi == lo;
    }
    !flat && (all_max || all_min)
}

/// True when both blocks have a finite maximizer at every split in the window.
pub fn well_posed(data: &Dataset, lo: f64, hi: f64) -> bool {
    data.subjects()
        .iter()
        .map(|s| s.observed_time)
        .filter(|&t| t > lo && t <= hi)
        .chain([lo])
        .all(|z| !block_diverges(data, |t| t <= z) && !block_diverges(data, |t| t > z))
}

/// The `count` first datasets of size `n` drawn from seeds `(root, k)`
/// that are well posed on `[0, tau]`.
pub fn well_posed_datasets(root: u64, n: usize, count: usize) -> Vec<Dataset> {
    (0..)
        .map(|k| small_dataset(cpcox::rng::derive_seed(root, &[k]), n))
        .filter(|d| well_posed(d, 0.0, d.tau()))
        .take(count)
        .collect()
}

/// Profile over every observed time in the window, plus its left end and
/// the midpoints between consecutive grid points. Candidates with a block
/// lacking a finite maximizer are skipped. Returns the smallest maximizing
/// grid point and the maximum.
pub fn grid_oracle(data: &Dataset, lo: f64, hi: f64) -> (f64, f64) {
    let mut grid: Vec<f64> = data
        .subjects()
        .iter()
        .map(|s| s.observed_time)
        .filter(|&t| t > lo && t <= hi)
        .chain([lo])
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mids: Vec<f64> = grid.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    grid.extend(mids);
    grid.sort_by(f64::total_cmp);
    let values: Vec<(f64, f64)> = grid
        .iter()
        .filter(|&&zeta| {
            !block_diverges(data, |t| t <= zeta) && !block_diverges(data, |t| t > zeta)
        })
        .map(|&zeta| {
            let a = golden_max(|c| naive_block(data, c, |t| t <= zeta), -50.0, 50.0).1;
            let b = golden_max(|c| naive_block(data, c, |t| t > zeta), -50.0, 50.0).1;
            (zeta, a + b)
        })
        .collect();
    let best = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let zeta = values
        .iter()
        .find(|v| v.1 >= best - 1e-9 * (1.0 + best.abs()))
        .expect("some candidate has finite maximizers")
        .0;
    (zeta, best)
}

/// Small change-point dataset with one standard-normal covariate.
pub fn small_dataset(seed: u64, n: usize) -> Dataset {
    let mut r = cpcox::rng::stream(seed, &[0x5A11]);
    let subjects = (0..n)
        .map(|_| {
            let z: f64 = r.sample(StandardNormal);
            // hazard 0.5 exp(0.5 z) before 1, 0.5 exp(-z) after
            let e = -(1.0 - r.random::<f64>()).ln();
            let (r1, r2) = (0.5 * (0.5 * z).exp(), 0.5 * (-z).exp());
            let t = if e <= r1 { e / r1 } else { 1.0 + (e - r1) / r2 };
            let c = 4.0 * r.random::<f64>();
            Subject::constant(t.min(c).min(4.0), t <= c && t <= 4.0, vec![z])
        })
        .collect();
    Dataset::new(subjects, 4.0).unwrap()
}

pub fn scenario(n: usize, seed: u64) -> Dataset {
    sample_dataset(&ScenarioConfig::delayed_effect(n), seed).unwrap()
}

/// Pearson goodness of fit of `counts` to Poisson(`mean`), cells pooled to
/// expected counts of at least 5. Returns the statistic and its p-value.
pub fn poisson_chi_square(counts: &[usize], mean: f64) -> (f64, f64) {
    use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};
    let pois = Poisson::new(mean).unwrap();
    let n = counts.len() as f64;
    let max = *counts.iter().max().unwrap();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for k in 0..=max + 1 {
        obs += counts.iter().filter(|&&c| c == k).count() as f64;
        exp += if k == max + 1 {
            n * (1.0 - (0..=max).map(|j| pois.pmf(j as u64)).sum::<f64>())
        } else {
            n * pois.pmf(k as u64)
        };
        if exp >= 5.0 {
            cells.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if let Some(last) = cells.last_mut() {
        last.0 += obs;
        last.1 += exp;
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = (cells.len() - 1) as f64;
    (stat, 1.0 - ChiSquared::new(df).unwrap().cdf(stat))
}

/// Nelson–Aalen increments `d_k / Y(t_k)` at the distinct event times.
pub fn nelson_aalen(data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let mut times: Vec<f64> = data
        .subjects()
        .iter()
        .filter(|s| s.event)
        .map(|s| s.observed_time)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let jumps = times
        .iter()
        .map(|&t| {
            let d = data.subjects().iter().filter(|s| s.event && s.observed_time == t).count();
            let y = data.subjects().iter().filter(|s| s.observed_time >= t).count();
            d as f64 / y as f64
        })
        .collect();
    (times, jumps)
}
