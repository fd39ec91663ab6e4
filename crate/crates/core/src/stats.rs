//! Small numeric helpers shared by the analysis code.

use statrs::function::erf::{erf, erfc};

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `P(|Z| <= t)` for `Z ~ N(0, sd^2)`.
pub fn normal_abs_cdf(t: f64, sd: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    erf(t / (sd * std::f64::consts::SQRT_2))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Empirical quantile of already sorted data (nearest rank, `q` in `[0, 1]`).
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Median of a slice of `f64`s, averaging the middle pair for even length.
/// Returns `None` for empty input.
pub fn median_of(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    })
}

/// Weighted least-squares slope of `y` against `x`.
pub fn weighted_slope(x: &[f64], y: &[f64], w: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || x.len() != w.len() {
        return None;
    }
    let sw: f64 = w.iter().sum();
    if sw <= 0.0 {
        return None;
    }
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for i in 0..x.len() {
        sxy += w[i] * (x[i] - mx) * (y[i] - my);
        sxx += w[i] * (x[i] - mx) * (x[i] - mx);
    }
    if sxx <= 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

pub fn slope(x: &[f64], y: &[f64]) -> Option<f64> {
    weighted_slope(x, y, &vec![1.0; x.len()])
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `samples` and `N(0, sd^2)`.
pub fn ks_distance_normal(samples: &[f64], sd: f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x / sd);
            let lo = f - i as f64 / n;
            let hi = (i as f64 + 1.0) / n - f;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}
