//! Parameters of the limit law for the delayed-effect scenario and a few
//! quantiles of the rescaled change-point limit.
//!
//! ```bash
//! cargo run --release -p cpcox --example limit_law -- 100000
//! ```

use cpcox::limit_law::{derive_limit_config, sample_limit_batch, DEFAULT_QUADRATURE_DIVISIONS};
use cpcox::simulate::ScenarioConfig;
use cpcox::stats::{mean_var, quantile_sorted};

fn main() -> cpcox::Result<()> {
    let draws: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100_000);
    let scenario = ScenarioConfig::delayed_effect(0);
    let cfg = derive_limit_config(&scenario, scenario.tau / DEFAULT_QUADRATURE_DIVISIONS as f64)?;
    println!(
        "gamma- = {:.5}, gamma+ = {:.5}, log r = {:.5} / {:.5}, H = {:.1}",
        cfg.gamma_minus, cfg.gamma_plus, cfg.log_r_left, cfg.log_r_right, cfg.window_half_width
    );
    println!("info_alpha = {:.5}, info_beta = {:.5}", cfg.info_alpha[0][0], cfg.info_beta[0][0]);

    let sample = sample_limit_batch(&cfg, draws, 5)?;
    let mut zeta: Vec<f64> = sample.iter().map(|d| d.phi_zeta).collect();
    zeta.sort_by(f64::total_cmp);
    for p in [0.025, 0.25, 0.5, 0.75, 0.975] {
        println!("phi_zeta quantile {p:>5}: {:>8.3}", quantile_sorted(&zeta, p));
    }
    let alpha: Vec<f64> = sample.iter().map(|d| d.phi_alpha[0]).collect();
    let beta: Vec<f64> = sample.iter().map(|d| d.phi_beta[0]).collect();
    println!(
        "var phi_alpha = {:.4} (1/info {:.4}), var phi_beta = {:.4} (1/info {:.4})",
        mean_var(&alpha).1,
        1.0 / cfg.info_alpha[0][0],
        mean_var(&beta).1,
        1.0 / cfg.info_beta[0][0]
    );
    Ok(())
}
