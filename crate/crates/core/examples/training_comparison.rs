//! Train the four methods on matched seeds and print final test accuracy.
//!
//! Pass a TOML file (see `examples/experiment.toml`) to override the defaults.

use otafl::experiment::{run_comparison, ExperimentConfig};

fn main() -> otafl::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let mut cfg = ExperimentConfig::named("comparison");
            cfg.training.rounds = 100;
            cfg.n_seeds = 3;
            cfg
        }
    };
    println!("{:6} {:>9} {:>10} {:>10} {:>8}", "method", "threshold", "median_acc", "median_loss", "diverged");
    for m in run_comparison(&cfg)? {
        println!(
            "{:6} {:>9} {:>10.4} {:>10.5} {:>8}",
            m.method.name(),
            m.threshold.map_or("-".into(), |c| c.to_string()),
            m.median_final_accuracy().unwrap_or(f64::NAN),
            m.median_final_loss().unwrap_or(f64::NAN),
            m.n_diverged()
        );
    }
    Ok(())
}
