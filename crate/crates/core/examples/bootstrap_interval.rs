//! Percentile intervals for the change point from every bootstrap scheme
//! on one dataset.
//!
//! ```bash
//! cargo run --release -p cpcox --example bootstrap_interval -- 500
//! ```

use std::time::Instant;

use cpcox::bootstrap::{percentile_ci, run_bootstrap_from_fit, BootstrapConfig, Method};
use cpcox::likelihood::{fit_mple, ProfileFitConfig};
use cpcox::simulate::{sample_dataset, ScenarioConfig};

fn main() -> cpcox::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(500);
    let data = sample_dataset(&ScenarioConfig::delayed_effect(n), 3)?;
    let window = ProfileFitConfig::with_window(0.5, 1.5);
    let fit = fit_mple(&data, &window)?;
    println!("n = {n}, zeta_hat = {:.4}", fit.theta_hat.zeta);

    let b = 300;
    let mut configs: Vec<BootstrapConfig> = [
        Method::Classical,
        Method::Conditional,
        Method::ConditionalCensoring,
        Method::Smooth,
        Method::SmoothCensoring,
    ]
    .into_iter()
    .map(|m| BootstrapConfig::new(m, b, window.clone(), 99))
    .collect();
    for e in [0.8, 0.9, 14.0 / 15.0] {
        configs.push(BootstrapConfig::m_out_of_n(e, b, window.clone(), 99));
    }

    println!("{:<26} {:>5} {:>8} {:>8} {:>7} {:>7}", "method", "m", "lower", "upper", "width", "secs");
    for cfg in &configs {
        let start = Instant::now();
        let draws = run_bootstrap_from_fit(&data, &fit, cfg)?;
        let ci = percentile_ci(&draws, 0.95)?;
        println!(
            "{:<26} {:>5} {:>8.4} {:>8.4} {:>7.4} {:>7.2}",
            cfg.label(),
            draws.m,
            ci.lower,
            ci.upper,
            ci.width(),
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
