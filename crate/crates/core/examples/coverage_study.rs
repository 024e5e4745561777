//! A small coverage study written to `results/coverage_example`, with a
//! manifest that `cpcox replay` can rerun.
//!
//! ```bash
//! cargo run --release -p cpcox --example coverage_study -- 40
//! ```

use cpcox::bootstrap::{BootstrapConfig, Method};
use cpcox::harness::{run_experiment, ExperimentSpec};
use cpcox::likelihood::ProfileFitConfig;

fn main() -> cpcox::Result<()> {
    let reps: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(40);
    let fit = ProfileFitConfig::with_window(0.5, 1.5);
    let spec = ExperimentSpec {
        sample_sizes: vec![300, 500],
        monte_carlo_reps: reps,
        methods: vec![
            BootstrapConfig::new(Method::Smooth, 200, fit.clone(), 0),
            BootstrapConfig::new(Method::Classical, 200, fit.clone(), 0),
            BootstrapConfig::m_out_of_n(14.0 / 15.0, 200, fit, 0),
        ],
        seed: 17,
        ..ExperimentSpec::table_defaults("results/coverage_example")
    };
    let (report, manifest) = run_experiment(&spec)?;
    println!("{:<22} {:>5} {:>9} {:>9} {:>7}", "method", "n", "coverage", "length", "mc se");
    for row in &report.rows {
        println!(
            "{:<22} {:>5} {:>9.3} {:>9.3} {:>7.3}",
            row.method, row.n, row.coverage, row.avg_length, row.mc_standard_error
        );
    }
    println!("failed cells: {}", report.failed_cells.len());
    println!("wrote {} files to {}", manifest.outputs.len(), spec.output_dir.display());
    Ok(())
}
