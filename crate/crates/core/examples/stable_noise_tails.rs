//! Draw SαS noise for several tail indices and compare the fitted survival
//! slope with `-alpha`.

use otafl::rng::seeded;
use otafl::stable_noise::{fit_tail_exponent, sample_sas, StableParams};

fn main() -> otafl::Result<()> {
    let mut rng = seeded(7);
    println!("alpha  fitted_slope  x_start   x_end");
    for alpha in [1.1, 1.5, 1.9] {
        let params = StableParams::new(alpha, 1.0)?;
        let draws = sample_sas(params, 1_000_000, &mut rng)?;
        let fit = fit_tail_exponent(&draws, 0.999, 1.0).expect("enough samples");
        println!("{alpha:5.2}  {:12.3}  {:7.2}  {:7.2}", fit.slope, fit.x_start, fit.x_end);
    }
    Ok(())
}
