//! Clip probability of MAC against the threshold, with the fitted log-log slope.

use otafl::analysis::lemma1_report;
use otafl::experiment::ExperimentConfig;

fn main() -> otafl::Result<()> {
    let mut cfg = ExperimentConfig::named("lemma1");
    cfg.lemma1.samples = 1_000_000;
    let report = lemma1_report(&cfg.lemma1_config())?;
    for s in &report.slopes {
        println!("alpha {:.1}: slope {:.3} over {} points", s.alpha, s.slope.unwrap_or(f64::NAN), s.n_points);
        for r in report.rows.iter().filter(|r| r.alpha == s.alpha) {
            println!(
                "  C {:8.3}  P(clip) {:.3e}  (tau/C)^alpha {:.3e}",
                r.c,
                r.empirical_clip_prob.unwrap_or(f64::NAN),
                r.asymptote
            );
        }
    }
    Ok(())
}
