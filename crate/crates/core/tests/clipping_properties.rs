mod common;

use common::{heavy_case, mac_oracle, sorted_median};
use otafl::clipping::{gnc_clip, mac_clip, vector_median};
use proptest::prelude::*;

fn dyadic_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-4096i32..4096).prop_map(|k| k as f64 / 8.0), 1..64)
}

fn float_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e6f64..1e6, 1..64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn matches_exact_closed_form(seed in any::<u64>()) {
        let (g, c) = heavy_case(seed);
        prop_assert_eq!(mac_clip(&g, c).unwrap().to_vec(), mac_oracle(&g, c));
    }

    #[test]
    fn median_matches_sorting(g in float_vec()) {
        prop_assert_eq!(vector_median(&g).unwrap(), sorted_median(&g));
    }

    #[test]
    fn odd_symmetry(g in float_vec(), c in 1e-3f64..1e3) {
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        let a = mac_clip(&neg, c).unwrap();
        let b = mac_clip(&g, c).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn shift_equivariance_on_dyadic_grid(g in dyadic_vec(), shift in -1000i32..1000, ck in 1i32..200) {
        // Multiples of 1/8 far below 2^53 keep every operation exact.
        let c = ck as f64 / 8.0;
        let s = shift as f64 / 8.0;
        let shifted: Vec<f64> = g.iter().map(|x| x + s).collect();
        let lhs = mac_clip(&shifted, c).unwrap();
        let rhs: Vec<f64> = mac_clip(&g, c).unwrap().iter().map(|x| x + s).collect();
        prop_assert_eq!(lhs.to_vec(), rhs);
    }

    #[test]
    fn shift_equivariance_to_rounding(g in float_vec(), s in -1e3f64..1e3, c in 1e-2f64..1e3) {
        let shifted: Vec<f64> = g.iter().map(|x| x + s).collect();
        let lhs = mac_clip(&shifted, c).unwrap();
        let rhs = mac_clip(&g, c).unwrap();
        let scale = g.iter().fold(s.abs() + c, |m, x| m.max(x.abs()));
        for (x, y) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((x - (y + s)).abs() <= 8.0 * f64::EPSILON * scale, "{x} vs {}", y + s);
        }
    }

    #[test]
    fn order_preserving(g in float_vec(), c in 1e-3f64..1e3) {
        let out = mac_clip(&g, c).unwrap();
        for i in 0..g.len() {
            for j in 0..g.len() {
                if g[i] <= g[j] {
                    prop_assert!(out[i] <= out[j]);
                }
            }
        }
    }

    #[test]
    fn bounded_by_window(seed in any::<u64>()) {
        let (g, c) = heavy_case(seed);
        let m = vector_median(&g).unwrap();
        for x in mac_clip(&g, c).unwrap().iter() {
            prop_assert!(*x >= m - c && *x <= m + c);
        }
    }

    #[test]
    fn second_pass_stays_within_threshold(seed in any::<u64>()) {
        let (g, c) = heavy_case(seed);
        let once = mac_clip(&g, c).unwrap();
        let twice = mac_clip(&once, c).unwrap();
        let m1 = vector_median(&once).unwrap();
        for x in twice.iter() {
            prop_assert!(*x >= m1 - c && *x <= m1 + c);
        }
        if m1 == vector_median(&g).unwrap() {
            prop_assert_eq!(twice, once);
        }
    }

    #[test]
    fn identity_above_max_deviation(g in float_vec()) {
        let m = vector_median(&g).unwrap();
        let c = 2.0 * g.iter().fold(0.0f64, |a, x| a.max((x - m).abs())) + 1.0;
        prop_assert_eq!(mac_clip(&g, c).unwrap().to_vec(), g);
    }

    #[test]
    fn gnc_norm_and_direction(g in float_vec(), c in 1e-3f64..1e7) {
        let out = gnc_clip(&g, c).unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let (n_in, n_out) = (norm(&g), norm(&out));
        let target = n_in.min(c);
        prop_assert!((n_out - target).abs() <= 1e-12 * target.max(f64::MIN_POSITIVE));
        if n_in > 0.0 {
            let s = n_out / n_in;
            prop_assert!(s <= 1.0 + 1e-15);
            for (x, y) in out.iter().zip(&g) {
                prop_assert!((x - s * y).abs() <= 1e-12 * n_in);
            }
        }
    }
}
