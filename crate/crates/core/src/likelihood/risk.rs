//! Compressed risk sets.
//!
//! At every distinct event time the risk set is stored as a sparse list of
//! `(covariate level, count)` atoms, where levels are the distinct covariate
//! vectors observed at risk. For categorical covariates this makes one
//! likelihood evaluation cost `O(events * levels)` with one `exp` per level.

use std::collections::HashMap;

use crate::data::{dot, Dataset};

#[derive(Clone, Debug)]
pub(crate) struct RiskTable {
    pub p: usize,
    /// Distinct event times, ascending.
    pub times: Vec<f64>,
    /// Number of failures at each event time.
    pub deaths: Vec<f64>,
    /// Row-major `E x p`: sum of the failing subjects' covariates.
    pub event_z: Vec<f64>,
    /// Row-major `L x p` distinct covariate vectors, sorted lexicographically.
    pub levels: Vec<f64>,
    /// Row-major `L x p x p` outer products of the levels.
    level_outer: Vec<f64>,
    row_ptr: Vec<usize>,
    atom_level: Vec<u32>,
    atom_count: Vec<f64>,
}

/// Log-likelihood contribution of a block of events and its derivatives.
#[derive(Clone, Debug)]
pub(crate) struct BlockEval {
    pub loglik: f64,
    pub grad: Vec<f64>,
    /// Row-major `p x p` Hessian (negative semidefinite).
    pub hess: Vec<f64>,
    /// Third derivative when `p == 1`, otherwise 0.
    pub third: f64,
}

fn key(v: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same level
    v.iter().map(|x| (x + 0.0).to_bits()).collect()
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

impl RiskTable {
    pub fn new(data: &Dataset) -> Self {
        let p = data.dim();
        let times = data.event_times();
        let e_count = times.len();
        let mut deaths = vec![0.0; e_count];
        let mut event_z = vec![0.0; e_count * p];
        for s in data.subjects().iter().filter(|s| s.event) {
            let e = times
                .binary_search_by(|t| t.total_cmp(&s.observed_time))
                .expect("event time is in the table");
            deaths[e] += 1.0;
            for (acc, z) in event_z[e * p..(e + 1) * p]
                .iter_mut()
                .zip(s.covariates.value_at(s.observed_time))
            {
                *acc += z;
            }
        }

        // Distinct covariate values seen at risk at some event time.
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut raw_levels: Vec<Vec<f64>> = Vec::new();
        let mut intern = |v: &[f64]| -> usize {
            *index.entry(key(v)).or_insert_with(|| {
                raw_levels.push(v.iter().map(|x| x + 0.0).collect());
                raw_levels.len() - 1
            })
        };

        let mut row_ptr = Vec::with_capacity(e_count + 1);
        let mut atoms: Vec<(usize, f64)> = Vec::new();
        row_ptr.push(0);
        if data.has_constant_covariates() {
            // Sweep subjects from the latest time backwards, adding them to
            // the running per-level counts as event times are passed.
            let subject_level: Vec<usize> = data
                .subjects()
                .iter()
                .map(|s| intern(s.covariates.value_at(0.0)))
                .collect();
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.sort_by(|&a, &b| {
                data.subjects()[b]
                    .observed_time
                    .total_cmp(&data.subjects()[a].observed_time)
            });
            let mut counts = vec![0.0; raw_levels.len()];
            let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); e_count];
            let mut next = 0;
            for e in (0..e_count).rev() {
                while next < order.len() && data.subjects()[order[next]].observed_time >= times[e] {
                    counts[subject_level[order[next]]] += 1.0;
                    next += 1;
                }
                rows[e] = counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0.0)
                    .map(|(l, &c)| (l, c))
                    .collect();
            }
            for row in rows {
                atoms.extend(row);
                row_ptr.push(atoms.len());
            }
        } else {
            for &t in &times {
                let mut row: HashMap<usize, f64> = HashMap::new();
                for s in data.subjects().iter().filter(|s| s.observed_time >= t) {
                    *row.entry(intern(s.covariates.value_at(t))).or_insert(0.0) += 1.0;
                }
                let mut row: Vec<(usize, f64)> = row.into_iter().collect();
                row.sort_by_key(|a| a.0);
                atoms.extend(row);
                row_ptr.push(atoms.len());
            }
        }

        // Canonical level order, independent of subject order.
        let mut perm: Vec<usize> = (0..raw_levels.len()).collect();
        perm.sort_by(|&a, &b| lex_cmp(&raw_levels[a], &raw_levels[b]));
        let mut rank = vec![0usize; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            rank[old] = new;
        }
        let levels: Vec<f64> = perm.iter().flat_map(|&l| raw_levels[l].clone()).collect();
        let mut level_outer = Vec::with_capacity(perm.len() * p * p);
        for l in 0..perm.len() {
            let z = &levels[l * p..(l + 1) * p];
            for a in z {
                for b in z {
                    level_outer.push(a * b);
                }
            }
        }
        for e in 0..e_count {
            atoms[row_ptr[e]..row_ptr[e + 1]].sort_by_key(|a| rank[a.0]);
        }
        let atom_level = atoms.iter().map(|a| rank[a.0] as u32).collect();
        let atom_count = atoms.iter().map(|a| a.1).collect();

        RiskTable {
            p,
            times,
            deaths,
            event_z,
            levels,
            level_outer,
            row_ptr,
            atom_level,
            atom_count,
        }
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_levels(&self) -> usize {
        if self.p == 0 {
            1
        } else {
            self.levels.len() / self.p
        }
    }

    /// Number of event times `<= zeta`.
    pub fn split(&self, zeta: f64) -> usize {
        self.times.partition_point(|&t| t <= zeta)
    }

    /// `sum_j Y_j(t_e) exp(gamma' Z_j(t_e))` at event time index `e`.
    pub fn at_risk_weight(&self, e: usize, gamma: &[f64]) -> f64 {
        let p = self.p;
        (self.row_ptr[e]..self.row_ptr[e + 1])
            .map(|a| {
                let l = self.atom_level[a] as usize;
                self.atom_count[a] * dot(gamma, &self.levels[l * p..(l + 1) * p]).exp()
            })
            .sum()
    }

    /// Log partial likelihood of events `lo..hi` under coefficient `gamma`,
    /// with gradient and Hessian.
    pub fn eval_block(&self, lo: usize, hi: usize, gamma: &[f64]) -> BlockEval {
        let p = self.p;
        let mut grad = vec![0.0; p];
        let mut hess = vec![0.0; p * p];
        if lo >= hi {
            return BlockEval {
                loglik: 0.0,
                grad,
                hess,
                third: 0.0,
            };
        }
        let n_levels = self.n_levels();
        let eta: Vec<f64> = (0..n_levels)
            .map(|l| dot(gamma, &self.levels[l * p..(l + 1) * p]))
            .collect();
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let shift = if shift.is_finite() { shift } else { 0.0 };
        let w: Vec<f64> = eta.iter().map(|x| (x - shift).exp()).collect();

        let mut linear = 0.0;
        let mut log_s0 = LogProduct::default();
        let mut third = 0.0;
        if p == 1 {
            let (mut g, mut h) = (0.0, 0.0);
            let mut t = 0.0;
            for e in lo..hi {
                let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
                for a in self.row_ptr[e]..self.row_ptr[e + 1] {
                    let l = self.atom_level[a] as usize;
                    let cw = self.atom_count[a] * w[l];
                    let z = self.levels[l];
                    s0 += cw;
                    s1 += cw * z;
                    s2 += cw * z * z;
                    s3 += cw * z * z * z;
                }
                let d = self.deaths[e];
                let inv = 1.0 / s0;
                let zbar = s1 * inv;
                log_s0.push(s0, d);
                linear += gamma[0] * self.event_z[e] - d * shift;
                g += self.event_z[e] - d * zbar;
                let var = s2 * inv - zbar * zbar;
                h -= d * var;
                t -= d * (s3 * inv - 3.0 * zbar * var - zbar * zbar * zbar);
            }
            grad[0] = g;
            hess[0] = h;
            third = t;
        } else {
            let mut s1 = vec![0.0; p];
            let mut s2 = vec![0.0; p * p];
            for e in lo..hi {
                let mut s0 = 0.0;
                s1.iter_mut().for_each(|x| *x = 0.0);
                s2.iter_mut().for_each(|x| *x = 0.0);
                for a in self.row_ptr[e]..self.row_ptr[e + 1] {
                    let l = self.atom_level[a] as usize;
                    let cw = self.atom_count[a] * w[l];
                    s0 += cw;
                    for (acc, z) in s1.iter_mut().zip(&self.levels[l * p..(l + 1) * p]) {
                        *acc += cw * z;
                    }
                    for (acc, zz) in s2
                        .iter_mut()
                        .zip(&self.level_outer[l * p * p..(l + 1) * p * p])
                    {
                        *acc += cw * zz;
                    }
                }
                let d = self.deaths[e];
                let ez = &self.event_z[e * p..(e + 1) * p];
                log_s0.push(s0, d);
                linear += dot(gamma, ez) - d * shift;
                let inv = 1.0 / s0;
                for i in 0..p {
                    let zi = s1[i] * inv;
                    grad[i] += ez[i] - d * zi;
                    for j in 0..p {
                        hess[i * p + j] -= d * (s2[i * p + j] - zi * s1[j]) * inv;
                    }
                }
            }
        }
        BlockEval {
            loglik: linear - log_s0.value(),
            grad,
            hess,
            third,
        }
    }
}

/// `sum_k d_k ln(x_k)` through a running product, with one `ln` per rescale.
struct LogProduct {
    prod: f64,
    log: f64,
}

impl Default for LogProduct {
    fn default() -> Self {
        LogProduct { prod: 1.0, log: 0.0 }
    }
}

impl LogProduct {
    const LIMIT: f64 = 1e100;

    #[inline]
    fn push(&mut self, x: f64, d: f64) {
        self.prod *= if d == 1.0 { x } else { x.powf(d) };
        if !(self.prod < Self::LIMIT && self.prod > 1.0 / Self::LIMIT) {
            self.log += self.prod.ln();
            self.prod = 1.0;
        }
    }

    fn value(&self) -> f64 {
        self.log + self.prod.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_dataset;

    #[test]
    fn third_derivative_matches_differenced_hessian() {
        let data = random_dataset(3, 60, 1);
        let table = RiskTable::new(&data);
        let (lo, hi) = (2, table.n_times());
        let h = 1e-5;
        for gamma in [-1.0, 0.0, 0.7] {
            let up = table.eval_block(lo, hi, &[gamma + h]).hess[0];
            let down = table.eval_block(lo, hi, &[gamma - h]).hess[0];
            let fd = (up - down) / (2.0 * h);
            let exact = table.eval_block(lo, hi, &[gamma]).third;
            assert!((fd - exact).abs() < 1e-5 * (1.0 + exact.abs()), "{fd} vs {exact}");
        }
    }
}
