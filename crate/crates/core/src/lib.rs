//! Change-point Cox regression: simulation, profile-likelihood estimation,
//! bootstrap confidence intervals for the change-point time, the limit-law
//! sampler and a Monte Carlo coverage harness.

pub mod bootstrap;
pub mod data;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod likelihood;
pub mod limit_law;
pub mod rng;
pub mod simulate;
pub mod stats;

#[cfg(test)]
mod testutil;

pub use data::{ChangePointParams, CovariatePath, Dataset, Subject};
pub use error::{Error, Result};
