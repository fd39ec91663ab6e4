#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use otafl::rng::{seeded, SimRng};
use otafl::stable_noise::StableParams;
use rand::Rng;

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite input")
}

/// Median by full sort; even lengths average the middle pair exactly and
/// round once.
pub fn sorted_median(g: &[f64]) -> f64 {
    let mut s = g.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        ((exact(s[n / 2 - 1]) + exact(s[n / 2])) / BigRational::from_integer(BigInt::from(2)))
            .to_f64()
            .unwrap()
    }
}

/// `med + sgn(g_i - med) * min(|g_i - med|, C)` in exact rational arithmetic,
/// rounded once to the nearest double.
pub fn mac_oracle(g: &[f64], c: f64) -> Vec<f64> {
    let m = exact(sorted_median(g));
    let c = exact(c);
    g.iter()
        .map(|&x| {
            let dev = exact(x) - &m;
            let mag = if dev.abs() < c { dev.abs() } else { c.clone() };
            let signed = if dev.is_zero() {
                BigRational::zero()
            } else if dev.is_positive() {
                mag
            } else {
                -mag
            };
            (&m + signed).to_f64().unwrap()
        })
        .collect()
}

/// Entries from a two-component SαS mixture: most from a narrow law, a
/// fraction from a much wider one.
pub fn heavy_vector(rng: &mut SimRng, d: usize) -> Vec<f64> {
    let alpha = rng.random_range(0.6..2.0);
    let narrow = StableParams::new(alpha, rng.random_range(0.01..1.0)).unwrap();
    let wide = StableParams::new(rng.random_range(0.6..2.0), rng.random_range(1.0..100.0)).unwrap();
    let shift: f64 = rng.random_range(-5.0..5.0);
    let p_wide = rng.random_range(0.0..0.3);
    (0..d)
        .map(|_| {
            let law = if rng.random_bool(p_wide) { wide } else { narrow };
            shift + law.sample(rng)
        })
        .collect()
}

pub fn heavy_case(seed: u64) -> (Vec<f64>, f64) {
    let mut rng = seeded(seed);
    let d = rng.random_range(1..=64);
    let g = heavy_vector(&mut rng, d);
    let c = 10f64.powf(rng.random_range(-2.0..2.0));
    (g, c)
}
