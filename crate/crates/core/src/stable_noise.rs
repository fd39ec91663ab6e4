//! Symmetric alpha-stable (SαS) noise.
//!
//! Draws use the Chambers-Mallows-Stuck transform, which is exact for every
//! `alpha` in `(0, 2]`. Scale follows the characteristic function
//! `E[exp(itX)] = exp(-(tau |t|)^alpha)`, so `alpha = 2` is `N(0, 2 tau^2)` and
//! `alpha = 1` is Cauchy with scale `tau`.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, Open01};

use crate::error::{Error, Result};
use crate::param::ParamVector;
use crate::stats::{normal_abs_cdf, sorted_quantile, weighted_slope};

/// Tail index and scale of an SαS law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableParams {
    alpha: f64,
    tau: f64,
}

impl StableParams {
    pub fn new(alpha: f64, tau: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::param("alpha", format!("{alpha} is outside (0, 2]")));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::param("tau", format!("{tau} must be positive and finite")));
        }
        Ok(StableParams { alpha, tau })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        StableParams::new(self.alpha, tau)
    }

    /// Standard (`tau = 1`) draw scaled by `tau`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.tau * standard_draw(self.alpha, rng)
    }
}

fn standard_draw<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v: f64 = Open01.sample(rng);
    let u = PI * (v - 0.5);
    let e: f64 = Open01.sample(rng);
    let w = -e.ln();
    if alpha == 2.0 {
        2.0 * u.sin() * w.sqrt()
    } else if alpha == 1.0 {
        u.tan()
    } else {
        let cos_u = u.cos();
        (alpha * u).sin() / cos_u.powf(1.0 / alpha)
            * (((1.0 - alpha) * u).cos() / w).powf((1.0 - alpha) / alpha)
    }
}

/// `dim` i.i.d. draws from `SαS(alpha, tau)`.
pub fn sample_sas<R: Rng + ?Sized>(
    params: StableParams,
    dim: usize,
    rng: &mut R,
) -> Result<ParamVector> {
    if dim == 0 {
        return Err(Error::param("dim", "must be at least 1"));
    }
    Ok((0..dim).map(|_| params.sample(rng)).collect())
}

/// Constant-free asymptotic clip probability `min(1, (tau / C)^alpha)`.
pub fn tail_prob_simplified(params: StableParams, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(Error::param("threshold", format!("{threshold} must be positive")));
    }
    Ok((params.tau / threshold).powf(params.alpha).min(1.0))
}

/// Law used for the difference `xi_i - xi_m` of two independent noise entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DifferenceLaw {
    /// Subtract two independent draws; the result is `SαS(alpha, 2^(1/alpha) tau)`.
    #[default]
    Exact,
    /// Single draw from `SαS(alpha, sqrt(2) tau)`. Agrees with `Exact` only at `alpha = 2`.
    Sqrt2Scale,
}

impl DifferenceLaw {
    pub fn scale(&self, params: StableParams) -> f64 {
        match self {
            DifferenceLaw::Exact => 2f64.powf(1.0 / params.alpha) * params.tau,
            DifferenceLaw::Sqrt2Scale => SQRT_2 * params.tau,
        }
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&self, params: StableParams, rng: &mut R) -> f64 {
        match self {
            DifferenceLaw::Exact => params.sample(rng) - params.sample(rng),
            DifferenceLaw::Sqrt2Scale => SQRT_2 * params.sample(rng),
        }
    }
}

fn check_clip_regime(c: f64, g: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::param("C", format!("{c} must be positive")));
    }
    if !(g >= 0.0) {
        return Err(Error::param("G", format!("{g} must be non-negative")));
    }
    if c <= SQRT_2 * g {
        return Err(Error::RegimeViolation(format!(
            "clipping threshold C = {c} must exceed sqrt(2)*G = {}",
            SQRT_2 * g
        )));
    }
    Ok(c - SQRT_2 * g)
}

pub const MIN_UNCLIPPED_SAMPLES: usize = 10_000;

/// Monte Carlo estimate of the probability that a gradient entry survives
/// MAC unclipped: the fraction of draws with `|xi_i - xi_m| <= C - sqrt(2) G`.
pub fn estimate_unclipped_prob<R: Rng + ?Sized>(
    params: StableParams,
    c: f64,
    g: f64,
    n_samples: usize,
    law: DifferenceLaw,
    rng: &mut R,
) -> Result<f64> {
    let margin = check_clip_regime(c, g)?;
    if n_samples < MIN_UNCLIPPED_SAMPLES {
        return Err(Error::param(
            "n_samples",
            format!("{n_samples} < {MIN_UNCLIPPED_SAMPLES}"),
        ));
    }
    let kept = (0..n_samples)
        .filter(|_| law.draw(params, rng).abs() <= margin)
        .count();
    Ok(kept as f64 / n_samples as f64)
}

/// Closed-form counterpart of [`estimate_unclipped_prob`] where one exists:
/// Gaussian at `alpha = 2`, Cauchy at `alpha = 1`.
pub fn closed_form_unclipped_prob(
    params: StableParams,
    c: f64,
    g: f64,
    law: DifferenceLaw,
) -> Result<Option<f64>> {
    let margin = check_clip_regime(c, g)?;
    let scale = law.scale(params);
    Ok(if params.alpha == 2.0 {
        // SαS(2, s) = N(0, 2 s^2)
        Some(normal_abs_cdf(margin, SQRT_2 * scale))
    } else if params.alpha == 1.0 {
        Some(2.0 / PI * (margin / scale).atan())
    } else {
        None
    })
}

/// Log-log fit of the empirical survival function `P(|X| > x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailFit {
    /// Fitted slope; approximately `-alpha` for `alpha < 2`.
    pub slope: f64,
    pub x_start: f64,
    pub x_end: f64,
    /// Smallest exceedance count among the fitted points.
    pub min_count: usize,
}

/// Fit the tail exponent over `decades` decades of `|x|` starting at the
/// `start_quantile` of `|samples|`. Points are weighted by their exceedance
/// count, which is the inverse Poisson variance of the log-survival.
pub fn fit_tail_exponent(samples: &[f64], start_quantile: f64, decades: f64) -> Option<TailFit> {
    let mut abs: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let n = abs.len();
    if n < 100 {
        return None;
    }
    let x_start = sorted_quantile(&abs, start_quantile);
    if !(x_start > 0.0) {
        return None;
    }
    const POINTS: usize = 16;
    let mut xs = Vec::with_capacity(POINTS);
    let mut ys = Vec::with_capacity(POINTS);
    let mut ws = Vec::with_capacity(POINTS);
    let mut min_count = usize::MAX;
    for i in 0..POINTS {
        let x = x_start * 10f64.powf(decades * i as f64 / (POINTS - 1) as f64);
        let exceed = n - abs.partition_point(|&v| v <= x);
        if exceed == 0 {
            continue;
        }
        min_count = min_count.min(exceed);
        xs.push(x.ln());
        ys.push((exceed as f64 / n as f64).ln());
        ws.push(exceed as f64);
    }
    let slope = weighted_slope(&xs, &ys, &ws)?;
    Some(TailFit {
        slope,
        x_start,
        x_end: x_start * 10f64.powf(decades),
        min_count,
    })
}
