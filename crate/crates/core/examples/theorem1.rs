//! Average squared gradient norm of MAC training against the convergence bound.

use otafl::analysis::{verify_theorem1, Theorem1Config};

fn main() -> otafl::Result<()> {
    let report = verify_theorem1(&Theorem1Config::default())?;
    println!(
        "L {:.3}  G {:.3}  eta {:.4}  C {:.3}  p_C {:.4}",
        report.smoothness.l, report.smoothness.g, report.eta, report.c, report.p_c
    );
    for r in &report.rows {
        println!("K {:5}  avg {:.4e}  bound {:.4e}  ratio {:.3}", r.k, r.empirical_avg, r.bound_rhs, r.margin_ratio);
    }
    println!("bound holds: {}", report.holds());
    Ok(())
}
