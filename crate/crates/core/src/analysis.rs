//! Numerical checks of the clipping theory: the unclipped-probability tail
//! law, the non-convex convergence bound for MAC, and the selection-matrix
//! decomposition of a single clip event.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use rand::Rng;

use crate::channel::{ChannelConfig, FadingModel};
use crate::clipping::{mac_window, sgn, ClipMethod};
use crate::error::{Error, Result};
use crate::fl::{derive_seed, run_training, FLConfig, Federation, DEFAULT_DIVERGENCE_FACTOR};
use crate::models::{compute_smoothness, global_loss, ModelSpec, QuadraticModel, SmoothnessInfo, SmoothnessOptions};
use crate::param::ParamVector;
use crate::rng::{stream, Stream};
use crate::stable_noise::{closed_form_unclipped_prob, tail_prob_simplified, DifferenceLaw, StableParams};
use crate::stats::weighted_slope;

/// Lower clamp on the unclipped probability used by the bound.
pub const MIN_UNCLIPPED_PROB: f64 = 1e-9;

/// Relative slack when comparing `G` against `C / sqrt(2)`, so that the
/// boundary `G = C / sqrt(2)` computed in floating point is accepted.
const BOUNDARY_RTOL: f64 = 1e-12;

/// Every symbol of the MAC convergence bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremParams {
    pub l: f64,
    pub g: f64,
    /// `f(w_0)`.
    pub f0: f64,
    pub f_star: f64,
    pub eta: f64,
    pub c: f64,
    pub k: usize,
    pub d: usize,
    pub alpha: f64,
    /// Noise scale; zero is the noiseless limit.
    pub tau: f64,
    /// Measured unclipped probability used instead of `1 - (tau/C)^alpha`.
    pub p_c_override: Option<f64>,
}

impl TheoremParams {
    /// Unclipped probability entering the bound, clamped to `[1e-9, 1]`.
    pub fn p_c(&self) -> Result<f64> {
        let p = match self.p_c_override {
            Some(p) if p > 0.0 && p <= 1.0 => p,
            Some(p) => return Err(Error::param("p_c", format!("{p} must lie in (0, 1]"))),
            None if self.tau == 0.0 => 1.0,
            None => 1.0 - tail_prob_simplified(StableParams::new(self.alpha, self.tau)?, self.c)?,
        };
        Ok(p.clamp(MIN_UNCLIPPED_PROB, 1.0))
    }

    fn validate(&self) -> Result<()> {
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(Error::param("L", "must be positive and finite"));
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(Error::param("G", "must be non-negative and finite"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::param("C", "must be positive and finite"));
        }
        if !(self.eta > 0.0) {
            return Err(Error::param("eta", "must be positive"));
        }
        if self.k == 0 {
            return Err(Error::param("K", "must be at least 1"));
        }
        if self.d == 0 {
            return Err(Error::param("d", "must be at least 1"));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::param("tau", "must be non-negative"));
        }
        if !(self.f0 >= self.f_star) {
            return Err(Error::param("f0", format!("f(w0) = {} is below f* = {}", self.f0, self.f_star)));
        }
        let eta_l = self.eta * self.l;
        if (eta_l - 2.0).abs() <= BOUNDARY_RTOL * 2.0 {
            return Err(Error::LearningRateAtBoundary);
        }
        if eta_l > 2.0 {
            return Err(Error::RegimeViolation(format!(
                "learning rate eta = {} violates eta <= 2/L = {}",
                self.eta,
                2.0 / self.l
            )));
        }
        if self.g > FRAC_1_SQRT_2 * self.c * (1.0 + BOUNDARY_RTOL) {
            return Err(Error::RegimeViolation(format!(
                "clipping threshold C = {} violates C > sqrt(2) G = {}",
                self.c,
                SQRT_2 * self.g
            )));
        }
        Ok(())
    }
}

/// The two terms of the bound on `(1/K) sum ||grad f(w_k)||^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremBound {
    /// `2 (f0 - f*) / (K p_C (2 - eta L) eta)`; vanishes as `K` grows.
    pub optimization: f64,
    /// `eta^2 d L (p_C (C/sqrt2 - G)^2 + (1 - p_C) C^2) / 2`; constant in `K`.
    pub residual: f64,
    pub p_c: f64,
}

impl TheoremBound {
    pub fn total(&self) -> f64 {
        self.optimization + self.residual
    }
}

pub fn theorem1_rhs(p: &TheoremParams) -> Result<TheoremBound> {
    p.validate()?;
    let p_c = p.p_c()?;
    let optimization = 2.0 * (p.f0 - p.f_star) / (p.k as f64 * p_c * (2.0 - p.eta * p.l) * p.eta);
    // At the boundary G = C/sqrt2 the margin may come out as -1 ulp.
    let margin = (FRAC_1_SQRT_2 * p.c - p.g).max(0.0);
    let residual = 0.5
        * p.eta
        * p.eta
        * p.d as f64
        * p.l
        * (p_c * margin * margin + (1.0 - p_c) * p.c * p.c);
    Ok(TheoremBound {
        optimization,
        residual,
        p_c,
    })
}

/// Descent bound for exact gradients, `2 (f0 - f*) / (K (2 - eta L) eta)`.
pub fn classical_bound(l: f64, eta: f64, f0: f64, f_star: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::param("K", "must be at least 1"));
    }
    if !(eta > 0.0) || !(eta * l < 2.0) {
        return Err(Error::RegimeViolation(format!("eta = {eta} must lie in (0, 2/L)")));
    }
    Ok(2.0 * (f0 - f_star) / (k as f64 * (2.0 - eta * l) * eta))
}

/// Quadratic testbed and run protocol for the bound check.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Config {
    pub dim: usize,
    pub n_clients: usize,
    /// Domain ball; iterates are projected onto it.
    pub radius: f64,
    /// Eigenvalue range of each client's Hessian.
    pub eig_range: (f64, f64),
    /// Local minimizers are drawn from the ball of this radius.
    pub center_radius: f64,
    pub alpha: f64,
    pub tau: f64,
    pub fading: FadingModel,
    /// Prefix lengths at which the running average is reported.
    pub k_grid: Vec<usize>,
    pub n_seeds: usize,
    /// Defaults to `1/L`.
    pub eta: Option<f64>,
    /// Defaults to `2 sqrt(2) G`.
    pub c: Option<f64>,
    /// Noiseless, fading-free, unclipped and unprojected: plain gradient descent.
    pub ideal: bool,
    /// Multiples of the base learning rate run at the largest `K`.
    pub eta_scales: Vec<f64>,
    pub p_c_override: Option<f64>,
    pub seed: u64,
}

impl Default for Theorem1Config {
    fn default() -> Self {
        Theorem1Config {
            dim: 10,
            n_clients: 5,
            radius: 1.0,
            eig_range: (0.5, 4.0),
            center_radius: 0.5,
            alpha: 1.5,
            tau: 0.1,
            fading: FadingModel::RayleighUnitMean,
            k_grid: vec![10, 100, 1000],
            n_seeds: 20,
            eta: None,
            c: None,
            ideal: false,
            eta_scales: vec![1.0, 0.5, 0.25],
            p_c_override: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem1Row {
    pub k: usize,
    /// `(1/K) sum_{k<K}` of the seed-averaged `||grad f(w_k)||^2`.
    pub empirical_avg: f64,
    /// MAC bound, or the classical descent bound for the ideal channel.
    pub bound_rhs: f64,
    pub margin_ratio: f64,
    pub classical_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaSweepRow {
    pub eta: f64,
    pub k: usize,
    pub empirical_avg: f64,
    pub bound_rhs: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Report {
    pub smoothness: SmoothnessInfo,
    pub eta: f64,
    pub c: f64,
    pub f0: f64,
    pub p_c: f64,
    pub ideal: bool,
    pub rows: Vec<Theorem1Row>,
    pub eta_sweep: Vec<EtaSweepRow>,
    /// Every seed stayed finite for the whole run.
    pub all_finite: bool,
}

impl Theorem1Report {
    /// Empirical average within the bound at every `K`.
    pub fn holds(&self) -> bool {
        self.rows.iter().all(|r| r.empirical_avg <= r.bound_rhs)
    }

    /// The running average strictly decreases along the `K` grid.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].empirical_avg < w[0].empirical_avg)
    }
}

/// Quadratic problem, starting point and constants shared by all seeds.
#[derive(Debug, Clone)]
pub struct Testbed {
    pub federation: Federation,
    pub smoothness: SmoothnessInfo,
    pub f0: f64,
}

pub fn theorem1_testbed(cfg: &Theorem1Config) -> Result<Testbed> {
    let mut rng = stream(cfg.seed, Stream::Problem);
    let q = QuadraticModel::random(cfg.dim, cfg.n_clients, cfg.eig_range, cfg.center_radius, &mut rng)?;
    let clients = q.client_datasets();
    let model = ModelSpec::quadratic(q);
    let opts = SmoothnessOptions {
        radius: cfg.radius,
        ..SmoothnessOptions::default()
    };
    let smoothness = compute_smoothness(&model, &clients, &opts, &mut rng)?;
    // Start on the boundary of the domain.
    let mut w0: ParamVector = (0..cfg.dim).map(|_| rng.random::<f64>() - 0.5).collect();
    let n = w0.norm();
    w0.iter_mut().for_each(|v| *v *= cfg.radius / n);
    let f0 = global_loss(&model, &w0, &clients)?;
    Ok(Testbed {
        federation: Federation {
            model,
            clients,
            held_out: None,
            init: Some(w0),
        },
        smoothness,
        f0,
    })
}

/// Per-seed `||grad f(w_k)||^2` traces, averaged over seeds.
fn seed_averaged_trace(base: &FLConfig, fed: &Federation, n_seeds: usize, master: u64) -> Result<(Vec<f64>, bool)> {
    let mut sum = vec![0.0; base.rounds];
    let mut all_finite = true;
    for s in 0..n_seeds {
        let cfg = FLConfig {
            seed: derive_seed(master, s as u64),
            ..base.clone()
        };
        let run = run_training(&cfg, fed)?;
        if run.diverged() || run.records.len() < base.rounds {
            all_finite = false;
        }
        for (acc, r) in sum.iter_mut().zip(&run.records) {
            *acc += r.grad_norm_sq;
        }
        all_finite &= run.records.iter().all(|r| r.grad_norm_sq.is_finite());
    }
    sum.iter_mut().for_each(|v| *v /= n_seeds as f64);
    Ok((sum, all_finite))
}

fn prefix_mean(trace: &[f64], k: usize) -> f64 {
    trace[..k].iter().sum::<f64>() / k as f64
}

/// Run the MAC system on the quadratic testbed and compare the running
/// average of `||grad f||^2` with the bound along `cfg.k_grid`.
pub fn verify_theorem1(cfg: &Theorem1Config) -> Result<Theorem1Report> {
    if cfg.n_seeds == 0 {
        return Err(Error::param("n_seeds", "must be at least 1"));
    }
    if cfg.k_grid.is_empty() || cfg.k_grid.contains(&0) {
        return Err(Error::param("k_grid", "must be non-empty with positive entries"));
    }
    let bed = theorem1_testbed(cfg)?;
    let info = bed.smoothness;
    let eta = cfg.eta.unwrap_or(1.0 / info.l);
    let c = cfg.c.unwrap_or(2.0 * SQRT_2 * info.g);
    let k_max = *cfg.k_grid.iter().max().expect("non-empty");
    let noise = StableParams::new(cfg.alpha, cfg.tau)?;

    let base = FLConfig {
        n_clients: cfg.n_clients,
        rounds: k_max,
        learning_rate: eta,
        local_epochs: 1,
        batch_size: 1,
        clip: if cfg.ideal { ClipMethod::None } else { ClipMethod::mac(c)? },
        channel: if cfg.ideal {
            ChannelConfig::ideal(noise)
        } else {
            ChannelConfig::noisy(cfg.fading, noise)
        },
        seed: cfg.seed,
        eval_every: k_max,
        projection_radius: (!cfg.ideal).then_some(cfg.radius),
        divergence_factor: DEFAULT_DIVERGENCE_FACTOR,
    };

    let params = |eta: f64, k: usize| TheoremParams {
        l: info.l,
        g: info.g,
        f0: bed.f0,
        f_star: info.f_star,
        eta,
        c,
        k,
        d: cfg.dim,
        alpha: cfg.alpha,
        tau: if cfg.ideal { 0.0 } else { cfg.tau },
        p_c_override: if cfg.ideal { Some(1.0) } else { cfg.p_c_override },
    };
    if eta * info.l >= 2.0 {
        // Strictly inside the step-size regime; equality is a dedicated error.
        theorem1_rhs(&params(eta, 1))?;
        return Err(Error::LearningRateAtBoundary);
    }
    if !cfg.ideal {
        base.check_theorem_regime(&info)?;
    }

    let (trace, mut all_finite) = seed_averaged_trace(&base, &bed.federation, cfg.n_seeds, cfg.seed)?;
    let mut rows = Vec::with_capacity(cfg.k_grid.len());
    let mut p_c = 1.0;
    for &k in &cfg.k_grid {
        let bound = theorem1_rhs(&params(eta, k))?;
        p_c = bound.p_c;
        let classical = classical_bound(info.l, eta, bed.f0, info.f_star, k)?;
        let bound_rhs = if cfg.ideal { classical } else { bound.total() };
        let empirical_avg = prefix_mean(&trace, k);
        rows.push(Theorem1Row {
            k,
            empirical_avg,
            bound_rhs,
            margin_ratio: empirical_avg / bound_rhs,
            classical_bound: classical,
        });
    }

    let mut eta_sweep = Vec::with_capacity(cfg.eta_scales.len());
    for &scale in &cfg.eta_scales {
        let e = eta * scale;
        let mut bound = theorem1_rhs(&params(e, k_max))?;
        if cfg.ideal {
            bound.optimization = classical_bound(info.l, e, bed.f0, info.f_star, k_max)?;
            bound.residual = 0.0;
        }
        let sweep_cfg = FLConfig {
            learning_rate: e,
            ..base.clone()
        };
        let (t, finite) = seed_averaged_trace(&sweep_cfg, &bed.federation, cfg.n_seeds, cfg.seed)?;
        all_finite &= finite;
        eta_sweep.push(EtaSweepRow {
            eta: e,
            k: k_max,
            empirical_avg: prefix_mean(&t, k_max),
            bound_rhs: bound.total(),
            residual: bound.residual,
        });
    }

    Ok(Theorem1Report {
        smoothness: info,
        eta,
        c,
        f0: bed.f0,
        p_c,
        ideal: cfg.ideal,
        rows,
        eta_sweep,
        all_finite,
    })
}

/// One MAC clip event written as `S g + (I - S)(med 1 + C_hat)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipDecomposition {
    /// `true` where the entry passes unclipped.
    pub selection: Vec<bool>,
    /// `sgn(g_i - med) C`.
    pub c_hat: ParamVector,
    pub median: f64,
    pub c: f64,
}

impl ClipDecomposition {
    pub fn n_clipped(&self) -> usize {
        self.selection.iter().filter(|s| !**s).count()
    }

    /// `S g + (I - S)(med 1 + C_hat)`.
    pub fn reconstruct(&self, g: &[f64]) -> Result<ParamVector> {
        self.check_len(g.len())?;
        Ok(self
            .selection
            .iter()
            .zip(g)
            .zip(self.c_hat.iter())
            .map(|((&s, &x), &ch)| {
                let s = if s { 1.0 } else { 0.0 };
                s * x + (1.0 - s) * (self.median + ch)
            })
            .collect())
    }

    /// `zeta = S xi + (I - S) C_hat`.
    pub fn residual(&self, noise: &[f64]) -> Result<ParamVector> {
        self.check_len(noise.len())?;
        Ok(self
            .selection
            .iter()
            .zip(noise)
            .zip(self.c_hat.iter())
            .map(|((&s, &xi), &ch)| if s { xi } else { ch })
            .collect())
    }

    /// Mean of `C_hat` over the clipped entries.
    pub fn mean_clipped_c_hat(&self) -> Option<f64> {
        let clipped: Vec<f64> = self
            .selection
            .iter()
            .zip(self.c_hat.iter())
            .filter(|(s, _)| !**s)
            .map(|(_, &c)| c)
            .collect();
        (!clipped.is_empty()).then(|| clipped.iter().sum::<f64>() / clipped.len() as f64)
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.selection.len() {
            return Err(Error::DimensionMismatch {
                expected: self.selection.len(),
                found: n,
            });
        }
        Ok(())
    }
}

pub fn decompose_clip_event(g: &[f64], c: f64) -> Result<ClipDecomposition> {
    let window = mac_window(g, c)?;
    Ok(ClipDecomposition {
        selection: g.iter().map(|&x| !window.clips(x)).collect(),
        c_hat: g.iter().map(|&x| sgn(x - window.median) * c).collect(),
        median: window.median,
        c,
    })
}

/// One `(alpha, C)` cell of the tail-law table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Row {
    pub alpha: f64,
    pub c: f64,
    /// `1 - p_C`; `None` when the cell violates `C > sqrt(2) G`.
    pub empirical_clip_prob: Option<f64>,
    /// Number of clipped draws behind the estimate.
    pub clip_count: usize,
    /// `(tau / C)^alpha`.
    pub asymptote: f64,
    /// Closed-form `1 - p_C` at `alpha = 2`.
    pub oracle_clip_prob: Option<f64>,
    pub regime_violation: bool,
    /// `C < 10 tau`, where the power law is not yet informative.
    pub outside_asymptotic: bool,
}

impl Lemma1Row {
    pub fn oracle_error(&self) -> Option<f64> {
        Some((self.empirical_clip_prob? - self.oracle_clip_prob?).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Slope {
    pub alpha: f64,
    /// Count-weighted log-log slope of `1 - p_C` against `C`.
    pub slope: Option<f64>,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Report {
    pub rows: Vec<Lemma1Row>,
    pub slopes: Vec<Lemma1Slope>,
}

impl Lemma1Report {
    /// Largest deviation from the Gaussian closed form over `alpha = 2` cells.
    pub fn max_oracle_error(&self) -> Option<f64> {
        self.rows.iter().filter_map(Lemma1Row::oracle_error).reduce(f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Config {
    pub alphas: Vec<f64>,
    pub tau: f64,
    pub c_grid: Vec<f64>,
    pub g: f64,
    pub n_samples: usize,
    pub law: DifferenceLaw,
    pub seed: u64,
}

/// Log-spaced grid of `n` points over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
            .collect(),
    }
}

/// Clip probability `P(|xi_i - xi_m| > C - sqrt(2) G)` across the grid.
///
/// One set of `n_samples` differences per `alpha` is shared by all `C`,
/// so the fitted slope is not polluted by independent per-cell noise.
pub fn lemma1_report(cfg: &Lemma1Config) -> Result<Lemma1Report> {
    if cfg.alphas.is_empty() || cfg.c_grid.is_empty() {
        return Err(Error::Empty("alpha list and C grid"));
    }
    if let Some(c) = cfg.c_grid.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(Error::param("C", format!("{c} must be positive")));
    }
    if cfg.n_samples < crate::stable_noise::MIN_UNCLIPPED_SAMPLES {
        return Err(Error::param(
            "n_samples",
            format!("{} < {}", cfg.n_samples, crate::stable_noise::MIN_UNCLIPPED_SAMPLES),
        ));
    }
    if !(cfg.g >= 0.0) {
        return Err(Error::param("G", "must be non-negative"));
    }
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for (ai, &alpha) in cfg.alphas.iter().enumerate() {
        let params = StableParams::new(alpha, cfg.tau)?;
        let mut rng = stream(derive_seed(cfg.seed, ai as u64), Stream::Channel);
        let mut abs: Vec<f64> = (0..cfg.n_samples)
            .map(|_| cfg.law.draw(params, &mut rng).abs())
            .collect();
        abs.sort_unstable_by(f64::total_cmp);
        let n = abs.len() as f64;

        let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
        for &c in &cfg.c_grid {
            let regime_violation = c <= SQRT_2 * cfg.g;
            let asymptote = tail_prob_simplified(params, c)?;
            let outside_asymptotic = c < 10.0 * cfg.tau;
            let (empirical, count, oracle) = if regime_violation {
                (None, 0, None)
            } else {
                let margin = c - SQRT_2 * cfg.g;
                let count = abs.len() - abs.partition_point(|&v| v <= margin);
                let oracle = closed_form_unclipped_prob(params, c, cfg.g, cfg.law)?
                    .filter(|_| alpha == 2.0)
                    .map(|p| 1.0 - p);
                (Some(count as f64 / n), count, oracle)
            };
            if let (Some(p), false) = (empirical, outside_asymptotic) {
                if count > 0 {
                    xs.push(c.ln());
                    ys.push(p.ln());
                    ws.push(count as f64);
                }
            }
            rows.push(Lemma1Row {
                alpha,
                c,
                empirical_clip_prob: empirical,
                clip_count: count,
                asymptote,
                oracle_clip_prob: oracle,
                regime_violation,
                outside_asymptotic,
            });
        }
        slopes.push(Lemma1Slope {
            alpha,
            slope: weighted_slope(&xs, &ys, &ws),
            n_points: xs.len(),
        });
    }
    Ok(Lemma1Report { rows, slopes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clipping::mac_clip;

    fn base_params() -> TheoremParams {
        TheoremParams {
            l: 2.0,
            g: 1.0,
            f0: 5.0,
            f_star: 1.0,
            eta: 0.5,
            c: 4.0,
            k: 100,
            d: 10,
            alpha: 1.5,
            tau: 0.1,
            p_c_override: None,
        }
    }

    #[test]
    fn noiseless_boundary_leaves_only_the_descent_term() {
        let c = 3.0;
        let p = TheoremParams {
            tau: 0.0,
            c,
            g: FRAC_1_SQRT_2 * c,
            ..base_params()
        };
        let b = theorem1_rhs(&p).unwrap();
        assert_eq!(b.p_c, 1.0);
        assert_eq!(b.residual, 0.0);
        let classical = classical_bound(p.l, p.eta, p.f0, p.f_star, p.k).unwrap();
        assert!((b.total() - classical).abs() <= 1e-15 * classical);
    }

    #[test]
    fn at_optimum_only_residual_remains() {
        let p = TheoremParams {
            f0: 1.0,
            ..base_params()
        };
        let b = theorem1_rhs(&p).unwrap();
        assert_eq!(b.optimization, 0.0);
        assert_eq!(b.total(), b.residual);
        assert!(b.residual > 0.0);
    }

    #[test]
    fn learning_rate_at_boundary_errors() {
        let p = TheoremParams {
            l: 2.0,
            eta: 1.0,
            ..base_params()
        };
        assert!(matches!(theorem1_rhs(&p), Err(Error::LearningRateAtBoundary)));
        let p = TheoremParams { eta: 1.5, ..p };
        assert!(matches!(theorem1_rhs(&p), Err(Error::RegimeViolation(_))));
    }

    #[test]
    fn threshold_regime_is_enforced() {
        let p = TheoremParams {
            g: 3.0,
            c: 4.0,
            ..base_params()
        };
        let err = theorem1_rhs(&p).unwrap_err();
        assert!(err.to_string().contains("sqrt(2) G"), "{err}");
    }

    #[test]
    fn halving_k_doubles_the_first_term() {
        let p = base_params();
        let full = theorem1_rhs(&p).unwrap();
        let half = theorem1_rhs(&TheoremParams { k: 50, ..p }).unwrap();
        assert!((half.optimization - 2.0 * full.optimization).abs() < 1e-12 * full.optimization);
        assert_eq!(half.residual, full.residual);
    }

    #[test]
    fn p_c_override_and_clamp() {
        let p = TheoremParams {
            p_c_override: Some(0.25),
            ..base_params()
        };
        assert_eq!(p.p_c().unwrap(), 0.25);
        let p = TheoremParams {
            tau: 100.0,
            ..base_params()
        };
        assert_eq!(p.p_c().unwrap(), MIN_UNCLIPPED_PROB);
        let p = TheoremParams {
            p_c_override: Some(1.5),
            ..base_params()
        };
        assert!(p.p_c().is_err());
    }

    #[test]
    fn decomposition_of_single_outlier() {
        let g = [0.0, 0.0, 100.0];
        let dec = decompose_clip_event(&g, 1.0).unwrap();
        assert_eq!(dec.selection, vec![true, true, false]);
        assert_eq!(dec.c_hat[2], 1.0);
        let r = dec.reconstruct(&g).unwrap();
        assert_eq!(r.to_vec(), vec![0.0, 0.0, 1.0]);
        assert_eq!(r, mac_clip(&g, 1.0).unwrap());
    }

    #[test]
    fn decomposition_without_clipping_is_identity() {
        let g = [0.3, -0.2, 0.1, 0.0];
        let dec = decompose_clip_event(&g, 5.0).unwrap();
        assert!(dec.selection.iter().all(|&s| s));
        assert_eq!(dec.reconstruct(&g).unwrap().to_vec(), g.to_vec());
        assert_eq!(dec.mean_clipped_c_hat(), None);
    }

    #[test]
    fn symmetric_clips_balance() {
        let g = [-10.0, -0.5, 0.0, 0.5, 10.0];
        let dec = decompose_clip_event(&g, 1.0).unwrap();
        assert_eq!(dec.n_clipped(), 2);
        assert_eq!(dec.mean_clipped_c_hat(), Some(0.0));
    }

    #[test]
    fn residual_mixes_noise_and_bounds() {
        let g = [0.0, 0.0, 100.0];
        let dec = decompose_clip_event(&g, 1.0).unwrap();
        let zeta = dec.residual(&[0.1, -0.2, 99.0]).unwrap();
        assert_eq!(zeta.to_vec(), vec![0.1, -0.2, 1.0]);
        assert!(dec.residual(&[0.0]).is_err());
    }

    #[test]
    fn lemma1_flags_regime_and_small_thresholds() {
        let cfg = Lemma1Config {
            alphas: vec![1.5],
            tau: 0.1,
            c_grid: vec![0.1, 0.5, 2.0],
            g: 0.3,
            n_samples: 20_000,
            law: DifferenceLaw::Exact,
            seed: 1,
        };
        let rep = lemma1_report(&cfg).unwrap();
        assert_eq!(rep.rows.len(), 3);
        assert!(rep.rows[0].regime_violation && rep.rows[0].empirical_clip_prob.is_none());
        assert!(!rep.rows[1].regime_violation && rep.rows[1].outside_asymptotic);
        assert!(!rep.rows[2].outside_asymptotic);
    }

    #[test]
    fn lemma1_below_noise_scale_clips_often() {
        let cfg = Lemma1Config {
            alphas: vec![1.5],
            tau: 0.1,
            c_grid: vec![0.1],
            g: 0.0,
            n_samples: 20_000,
            law: DifferenceLaw::Exact,
            seed: 2,
        };
        let row = lemma1_report(&cfg).unwrap().rows[0];
        assert!(row.outside_asymptotic);
        assert!(row.empirical_clip_prob.unwrap() > 0.3);
    }

    #[test]
    fn lemma1_gaussian_matches_closed_form() {
        let cfg = Lemma1Config {
            alphas: vec![2.0],
            tau: 0.1,
            c_grid: log_grid(0.1, 1.0, 5),
            g: 0.0,
            n_samples: 200_000,
            law: DifferenceLaw::Exact,
            seed: 3,
        };
        let rep = lemma1_report(&cfg).unwrap();
        assert!(rep.max_oracle_error().unwrap() < 0.005);
    }
}
