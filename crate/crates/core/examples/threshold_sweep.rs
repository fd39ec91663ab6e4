//! Grid search of the MAC and GNC thresholds.

use otafl::experiment::{threshold_sweep, ExperimentConfig};

fn main() -> otafl::Result<()> {
    let mut cfg = ExperimentConfig::named("sweep");
    cfg.training.rounds = 60;
    cfg.n_seeds = 2;
    cfg.clipping.sweep_grid = vec![0.1, 0.25, 0.5, 1.0, 2.0];
    for r in threshold_sweep(&cfg)? {
        println!(
            "{:4} C {:5.2}  median acc {:.4}{}",
            r.method.name(),
            r.c,
            r.median_final_accuracy.unwrap_or(f64::NAN),
            if r.best { "  <- best" } else { "" }
        );
    }
    Ok(())
}
