//! Simulate a trial from a scenario file (or the built-in delayed-effect
//! scenario) and print a summary plus the first rows of the dataset CSV.
//!
//! ```bash
//! cargo run --release -p cpcox --example simulate_dataset -- 2000 scenario.toml
//! ```

use cpcox::io::write_dataset;
use cpcox::simulate::{sample_dataset, ScenarioConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(1000);
    let scenario = match args.next() {
        Some(path) => ScenarioConfig {
            n,
            ..toml::from_str(&std::fs::read_to_string(path)?)?
        },
        None => ScenarioConfig::delayed_effect(n),
    };
    let data = sample_dataset(&scenario, 7)?;

    let censored = data.len() - data.n_events();
    println!("n = {}, events = {}, censored = {:.1}%", data.len(), data.n_events(), 100.0 * censored as f64 / n as f64);
    for level in &scenario.covariate_law {
        let profile = scenario.hazard_profile(&level.value);
        println!(
            "Z = {:?}: P(T <= zeta0) = {:.4}, P(T > tau) = {:.4}",
            level.value,
            1.0 - profile.survival(scenario.zeta0),
            profile.survival(scenario.tau)
        );
    }

    let mut csv = Vec::new();
    write_dataset(&data, &mut csv)?;
    for line in String::from_utf8(csv)?.lines().take(6) {
        println!("{line}");
    }
    Ok(())
}
