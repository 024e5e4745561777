//! Survival data types shared by every other module.
//!
//! A [`Dataset`] is an ordered list of right-censored observations
//! `(observed_time, event, covariates)` on a study horizon `[0, tau]`.
//! Subject order is part of the identity of a dataset: the conditional
//! bootstrap schemes regenerate subject `i` from subject `i`'s covariates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Covariate process of one subject.
///
/// Piecewise paths are left-continuous step functions: with breakpoints
/// `b_1 < ... < b_k`, the value on `[0, b_1]` is `values[0]`, on
/// `(b_1, b_2]` it is `values[1]`, and so on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CovariatePath {
    Constant(Vec<f64>),
    Piecewise {
        breakpoints: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

impl CovariatePath {
    pub fn constant(value: Vec<f64>) -> Result<Self> {
        check_finite(&value)?;
        Ok(CovariatePath::Constant(value))
    }

    /// Build a step path; `values.len()` must equal `breakpoints.len() + 1`.
    /// A path without breakpoints collapses to [`CovariatePath::Constant`].
    pub fn piecewise(breakpoints: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "{} breakpoints need {} segment values, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                values.len()
            )));
        }
        let p = values[0].len();
        for v in &values {
            if v.len() != p {
                return Err(Error::InvalidInput(
                    "covariate segments have different dimensions".into(),
                ));
            }
            check_finite(v)?;
        }
        if breakpoints.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::InvalidInput(
                "breakpoints must be finite and nonnegative".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if breakpoints.is_empty() {
            let mut values = values;
            return Ok(CovariatePath::Constant(values.remove(0)));
        }
        Ok(CovariatePath::Piecewise {
            breakpoints,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            CovariatePath::Constant(v) => v.len(),
            CovariatePath::Piecewise { values, .. } => values[0].len(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, CovariatePath::Constant(_))
    }

    /// Value of the path at `t` (left-continuous at breakpoints).
    pub fn value_at(&self, t: f64) -> &[f64] {
        match self {
            CovariatePath::Constant(v) => v,
            CovariatePath::Piecewise {
                breakpoints,
                values,
            } => {
                let idx = breakpoints.partition_point(|&b| b < t);
                &values[idx]
            }
        }
    }

    /// Breakpoints of the path (empty for constant paths).
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            CovariatePath::Constant(_) => &[],
            CovariatePath::Piecewise { breakpoints, .. } => breakpoints,
        }
    }

    /// `(segment start, value)` pairs; the first start is 0.
    pub fn segments(&self) -> Vec<(f64, &[f64])> {
        match self {
            CovariatePath::Constant(v) => vec![(0.0, v.as_slice())],
            CovariatePath::Piecewise {
                breakpoints,
                values,
            } => std::iter::once(0.0)
                .chain(breakpoints.iter().copied())
                .zip(values.iter().map(Vec::as_slice))
                .collect(),
        }
    }
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("covariate values must be finite".into()))
    }
}

/// One right-censored observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub observed_time: f64,
    /// `true` for an observed failure, `false` for a censored time.
    pub event: bool,
    pub covariates: CovariatePath,
}

impl Subject {
    pub fn new(observed_time: f64, event: bool, covariates: CovariatePath) -> Self {
        Subject {
            observed_time,
            event,
            covariates,
        }
    }

    /// Subject with a constant covariate vector.
    pub fn constant(observed_time: f64, event: bool, z: Vec<f64>) -> Self {
        Subject::new(observed_time, event, CovariatePath::Constant(z))
    }
}

/// Validated, immutable collection of subjects on `[0, tau]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    subjects: Vec<Subject>,
    tau: f64,
}

impl Dataset {
    pub fn new(subjects: Vec<Subject>, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
        }
        let p = subjects.first().map_or(0, |s| s.covariates.dim());
        for (i, s) in subjects.iter().enumerate() {
            if !(s.observed_time >= 0.0 && s.observed_time <= tau) {
                return Err(Error::InvalidInput(format!(
                    "subject {i}: observed time {} outside [0, {tau}]",
                    s.observed_time
                )));
            }
            if s.covariates.dim() != p {
                return Err(Error::InvalidInput(format!(
                    "subject {i}: covariate dimension {} differs from {p}",
                    s.covariates.dim()
                )));
            }
            if s.covariates.breakpoints().iter().any(|&b| b > tau) {
                return Err(Error::InvalidInput(format!(
                    "subject {i}: covariate breakpoint beyond tau"
                )));
            }
        }
        Ok(Dataset { subjects, tau })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Covariate dimension `p` (0 for an empty dataset).
    pub fn dim(&self) -> usize {
        self.subjects.first().map_or(0, |s| s.covariates.dim())
    }

    pub fn n_events(&self) -> usize {
        self.subjects.iter().filter(|s| s.event).count()
    }

    pub fn has_constant_covariates(&self) -> bool {
        self.subjects.iter().all(|s| s.covariates.is_constant())
    }

    /// Indices `j` with `observed_time_j >= t`.
    pub fn risk_set(&self, t: f64) -> Vec<usize> {
        self.subjects
            .iter()
            .enumerate()
            .filter(|(_, s)| s.observed_time >= t)
            .map(|(j, _)| j)
            .collect()
    }

    /// Sorted distinct failure times.
    pub fn event_times(&self) -> Vec<f64> {
        let mut times: Vec<f64> = self
            .subjects
            .iter()
            .filter(|s| s.event)
            .map(|s| s.observed_time)
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }
}

/// Change-point regression parameters `(alpha, beta, zeta)`: the hazard uses
/// `alpha` up to and including `zeta` and `beta` afterwards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangePointParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub zeta: f64,
}

impl ChangePointParams {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>, zeta: f64) -> Self {
        ChangePointParams { alpha, beta, zeta }
    }

    /// Coefficient vector in force at time `t`.
    #[inline]
    pub fn coef_at(&self, t: f64) -> &[f64] {
        if t <= self.zeta {
            &self.alpha
        } else {
            &self.beta
        }
    }

    /// Linear predictor `coef(t)' z(t)`.
    pub fn linear_predictor(&self, t: f64, z: &CovariatePath) -> f64 {
        dot(self.coef_at(t), z.value_at(t))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
