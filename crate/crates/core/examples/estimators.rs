//! Breslow, kernel-smoothed baseline hazard and Kaplan–Meier censoring
//! estimates on one simulated dataset, compared with the true baseline.
//!
//! ```bash
//! cargo run --release -p cpcox --example estimators
//! ```

use cpcox::estimators::{
    conditional_survival_smooth, conditional_survival_step, FittedModel, DEFAULT_GRID_DIVISIONS,
    DEFAULT_MAX_STRATA,
};
use cpcox::likelihood::ProfileFitConfig;
use cpcox::simulate::{sample_dataset, ScenarioConfig};
use cpcox::CovariatePath;

fn main() -> cpcox::Result<()> {
    let scenario = ScenarioConfig::delayed_effect(2000);
    let data = sample_dataset(&scenario, 11)?;
    let tau = data.tau();
    let model = FittedModel::fit(data, &ProfileFitConfig::with_window(0.5, 1.5))?
        .with_smooth_hazard(tau / DEFAULT_GRID_DIVISIONS as f64)?
        .with_censoring(DEFAULT_MAX_STRATA)?;
    let smooth = model.smooth_hazard.as_ref().expect("built above");
    println!("zeta_hat = {:.4}, bandwidth = {:.4}", model.theta_hat.zeta, smooth.bandwidth);

    println!("{:>5} {:>10} {:>10} {:>10} {:>10}", "t", "Lambda_B", "Lambda_0", "lambda_s", "lambda_0");
    for t in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0] {
        println!(
            "{t:>5.2} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            model.breslow.cumulative(t),
            0.5 * t,
            smooth.value_at(t),
            scenario.baseline_hazard.rate_at(t)
        );
    }

    let censoring = model.censoring.as_ref().expect("built above");
    for level in [vec![0.0], vec![1.0]] {
        let km = censoring.stratum(&level)?;
        let z = CovariatePath::constant(level.clone())?;
        let step = conditional_survival_step(&model, &z);
        let cont = conditional_survival_smooth(&model, &z)?;
        println!(
            "Z = {level:?}: G(2) = {:.4} (exact {:.4}), F_b(2) = {:.4}, F_s(2) = {:.4}",
            km.survival_at(2.0),
            (-0.1 * 2.0f64).exp(),
            step.cdf(2.0),
            cont.cdf(2.0)
        );
    }
    Ok(())
}
