//! Random datasets and naive reference computations for unit tests.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{dot, ChangePointParams, Dataset, Subject};
use crate::rng;

/// `n` subjects with `p` standard-normal covariates, exponential survival
/// and uniform censoring on `[0, 4]`.
pub fn random_dataset(seed: u64, n: usize, p: usize) -> Dataset {
    let mut r = rng::stream(seed, &[0xDA7A]);
    let subjects = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..p).map(|_| r.sample(StandardNormal)).collect();
            let rate = 0.5 * (0.5 * z.iter().sum::<f64>()).exp();
            let t = -(1.0 - r.random::<f64>()).ln() / rate;
            let c = 4.0 * r.random::<f64>();
            Subject::constant(t.min(c), t <= c, z)
        })
        .collect();
    Dataset::new(subjects, 4.0).unwrap()
}

/// Direct transcription of the partial likelihood, one subject at a time.
pub fn naive_loglik(data: &Dataset, theta: &ChangePointParams) -> f64 {
    let mut total = 0.0;
    for s in data.subjects().iter().filter(|s| s.event) {
        let t = s.observed_time;
        let coef = if t <= theta.zeta { &theta.alpha } else { &theta.beta };
        let num = dot(coef, s.covariates.value_at(t));
        let den: f64 = data
            .subjects()
            .iter()
            .filter(|j| j.observed_time >= t)
            .map(|j| dot(coef, j.covariates.value_at(t)).exp())
            .sum();
        total += num - den.ln();
    }
    total
}
