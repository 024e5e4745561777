//! Simulate the delayed-effect trial and estimate the change point.
//!
//! ```bash
//! cargo run --release -p cpcox --example fit_change_point -- 1000
//! ```

use std::time::Instant;

use cpcox::likelihood::{fit_mple, ProfileFitConfig};
use cpcox::simulate::{sample_dataset, ScenarioConfig};

fn main() -> cpcox::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(500);
    let scenario = ScenarioConfig::delayed_effect(n);
    let data = sample_dataset(&scenario, 2024)?;
    let cfg = ProfileFitConfig::with_window(0.5, 1.5);

    let fit = fit_mple(&data, &cfg)?;
    println!(
        "n = {n}, events = {}, candidates = {}",
        data.n_events(),
        fit.profile_curve.len()
    );
    println!(
        "zeta_hat = {:.4}, alpha_hat = {:.4}, beta_hat = {:.4}, loglik = {:.4}",
        fit.theta_hat.zeta, fit.theta_hat.alpha[0], fit.theta_hat.beta[0], fit.loglik
    );

    // A coarse text rendering of the profile likelihood.
    let max = fit.loglik;
    for point in fit.profile_curve.iter().step_by((fit.profile_curve.len() / 20).max(1)) {
        let bar = ((point.loglik - max + 10.0).max(0.0) * 4.0) as usize;
        println!("{:>7.4} {:>11.4} {}", point.zeta, point.loglik, "#".repeat(bar));
    }

    let reps = 200;
    let start = Instant::now();
    for seed in 0..reps {
        let d = sample_dataset(&scenario, seed)?;
        fit_mple(&d, &cfg)?;
    }
    println!(
        "mean time per simulate+fit: {:.3} ms",
        start.elapsed().as_secs_f64() * 1e3 / reps as f64
    );
    Ok(())
}
