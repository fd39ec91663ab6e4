//! Objectives with hand-derived gradients.
//!
//! Every model exposes the local empirical risk of one client, its gradient,
//! multi-epoch local training, and the constants (`L`, `G`, `f*`) that the
//! convergence analysis needs.

mod mlp;
mod quadratic;
mod softmax;

use std::sync::Arc;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

pub use mlp::{Activation, MlpModel};
pub use quadratic::{QuadraticClient, QuadraticModel};
pub use softmax::LogisticModel;

use crate::clipping::BlockLayout;
use crate::data::{ClientDataset, Dataset};
use crate::error::{Error, Result};
use crate::param::ParamVector;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Quadratic(Arc<QuadraticModel>),
    Logistic(LogisticModel),
    Mlp(MlpModel),
}

impl ModelSpec {
    pub fn quadratic(model: QuadraticModel) -> Self {
        ModelSpec::Quadratic(Arc::new(model))
    }

    pub fn logistic(feature_dim: usize, n_classes: usize) -> Self {
        ModelSpec::Logistic(LogisticModel {
            feature_dim,
            n_classes,
        })
    }

    pub fn mlp(input_dim: usize, hidden: usize, n_classes: usize, activation: Activation) -> Self {
        ModelSpec::Mlp(MlpModel {
            input_dim,
            hidden,
            n_classes,
            activation,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::Quadratic(q) => q.dim(),
            ModelSpec::Logistic(m) => m.dim(),
            ModelSpec::Mlp(m) => m.dim(),
        }
    }

    /// One block per parameter tensor; the quadratic model is a single block.
    pub fn block_layout(&self) -> BlockLayout {
        match self {
            ModelSpec::Quadratic(q) => BlockLayout::single(q.dim()),
            ModelSpec::Logistic(m) => BlockLayout::new(m.block_lengths()).expect("non-empty blocks"),
            ModelSpec::Mlp(m) => BlockLayout::new(m.block_lengths()).expect("non-empty blocks"),
        }
    }

    pub fn is_classifier(&self) -> bool {
        !matches!(self, ModelSpec::Quadratic(_))
    }

    /// Initial parameters: zeros for convex models, He-scaled for the MLP.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        match self {
            ModelSpec::Mlp(m) => ParamVector::new(m.init_params(rng)),
            _ => ParamVector::zeros(self.dim()),
        }
    }

    fn check(&self, w: &[f64], data: &ClientDataset) -> Result<()> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: w.len(),
            });
        }
        if data.is_empty() {
            return Err(Error::Empty("client dataset"));
        }
        let features = match self {
            ModelSpec::Quadratic(_) => return Ok(()),
            ModelSpec::Logistic(m) => m.feature_dim,
            ModelSpec::Mlp(m) => m.input_dim,
        };
        if data.data.feature_dim() != features {
            return Err(Error::DimensionMismatch {
                expected: features,
                found: data.data.feature_dim(),
            });
        }
        Ok(())
    }

    /// Mean loss over `batch`, writing the mean gradient into `grad`.
    fn eval(&self, w: &[f64], data: &ClientDataset, batch: &[usize], grad: Option<&mut [f64]>) -> Result<f64> {
        match self {
            ModelSpec::Quadratic(q) => match grad {
                Some(g) => q.gradient_into(data.client_id, w, g),
                None => q.loss(data.client_id, w),
            },
            ModelSpec::Logistic(m) => Ok(m.eval(w, &data.data, batch, grad)),
            ModelSpec::Mlp(m) => Ok(m.eval(w, &data.data, batch, grad)),
        }
    }

    /// Predicted class; `None` for non-classifiers.
    pub fn predict(&self, w: &[f64], x: &[f64]) -> Option<usize> {
        match self {
            ModelSpec::Quadratic(_) => None,
            ModelSpec::Logistic(m) => Some(m.predict(w, x)),
            ModelSpec::Mlp(m) => Some(m.predict(w, x)),
        }
    }

    /// Fraction of correctly classified samples; `None` for non-classifiers.
    pub fn accuracy(&self, w: &[f64], data: &Dataset) -> Option<f64> {
        if !self.is_classifier() || data.is_empty() {
            return None;
        }
        let correct = (0..data.len())
            .filter(|&i| self.predict(w, data.x(i)) == Some(data.y(i)))
            .count();
        Some(correct as f64 / data.len() as f64)
    }
}

fn full_batch(data: &ClientDataset) -> Vec<usize> {
    (0..data.len()).collect()
}

/// Local empirical risk `f_n(w)` of one client.
pub fn local_loss(spec: &ModelSpec, w: &[f64], data: &ClientDataset) -> Result<f64> {
    spec.check(w, data)?;
    spec.eval(w, data, &full_batch(data), None)
}

/// `grad f_n(w)` over the client's full dataset.
pub fn local_gradient(spec: &ModelSpec, w: &[f64], data: &ClientDataset) -> Result<ParamVector> {
    Ok(local_loss_and_gradient(spec, w, data)?.1)
}

pub fn local_loss_and_gradient(spec: &ModelSpec, w: &[f64], data: &ClientDataset) -> Result<(f64, ParamVector)> {
    spec.check(w, data)?;
    let mut g = ParamVector::zeros(spec.dim());
    let loss = spec.eval(w, data, &full_batch(data), Some(&mut g))?;
    Ok((loss, g))
}

/// `f(w) = (1/N) sum_n f_n(w)` and its gradient.
pub fn global_loss_and_gradient(spec: &ModelSpec, w: &[f64], clients: &[ClientDataset]) -> Result<(f64, ParamVector)> {
    if clients.is_empty() {
        return Err(Error::Empty("no clients"));
    }
    let mut g = ParamVector::zeros(spec.dim());
    let mut loss = 0.0;
    for c in clients {
        let (l, gn) = local_loss_and_gradient(spec, w, c)?;
        loss += l;
        g.axpy(1.0, &gn);
    }
    let n = clients.len() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    Ok((loss / n, g))
}

pub fn global_loss(spec: &ModelSpec, w: &[f64], clients: &[ClientDataset]) -> Result<f64> {
    if clients.is_empty() {
        return Err(Error::Empty("no clients"));
    }
    let mut loss = 0.0;
    for c in clients {
        loss += local_loss(spec, w, c)?;
    }
    Ok(loss / clients.len() as f64)
}

/// Local mini-batch schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

/// Run `epochs` of shuffled mini-batch descent from `w` and return the
/// pseudo-gradient `(w - w_final) / server_lr`.
///
/// Batches covering the whole dataset are taken in storage order, so one
/// full-batch epoch with `lr == server_lr` returns exactly `local_gradient`.
pub fn local_update<R: Rng + ?Sized>(
    spec: &ModelSpec,
    w: &[f64],
    data: &ClientDataset,
    schedule: LocalTraining,
    server_lr: f64,
    rng: &mut R,
) -> Result<ParamVector> {
    spec.check(w, data)?;
    if schedule.epochs == 0 || schedule.batch_size == 0 {
        return Err(Error::param("local_training", "epochs and batch_size must be at least 1"));
    }
    if !(schedule.lr > 0.0 && server_lr > 0.0) {
        return Err(Error::param("lr", "learning rates must be positive"));
    }
    let d = spec.dim();
    let m = data.len();
    let mut local = ParamVector::from(w);
    let mut acc = ParamVector::zeros(d);
    let mut g = vec![0.0; d];
    let mut order: Vec<usize> = (0..m).collect();
    let full = schedule.batch_size >= m;
    for _ in 0..schedule.epochs {
        if !full {
            order.shuffle(rng);
        }
        for batch in order.chunks(schedule.batch_size) {
            spec.eval(&local, data, batch, Some(&mut g))?;
            local.axpy(-schedule.lr, &g);
            acc.axpy(1.0, &g);
        }
    }
    let ratio = schedule.lr / server_lr;
    if ratio != 1.0 {
        acc.iter_mut().for_each(|v| *v *= ratio);
    }
    Ok(acc)
}

/// Constants of the smoothness and bounded-gradient assumptions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessInfo {
    /// Lipschitz constant of `grad f`.
    pub l: f64,
    /// Bound on every client's gradient norm over the domain.
    pub g: f64,
    /// Lower bound on `f`.
    pub f_star: f64,
    /// `true` when all three are certified rather than estimated.
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessOptions {
    /// Domain is the ball `||w|| <= radius`.
    pub radius: f64,
    /// Sampled points for the estimated (non-quadratic) case.
    pub n_probes: usize,
    pub power_iters: usize,
    /// Full-batch descent steps used to estimate `f*`.
    pub fstar_steps: usize,
}

impl Default for SmoothnessOptions {
    fn default() -> Self {
        SmoothnessOptions {
            radius: 1.0,
            n_probes: 1000,
            power_iters: 12,
            fstar_steps: 2000,
        }
    }
}

/// `L`, `G` and `f*` for `spec` on the ball of radius `opts.radius`.
///
/// Quadratic models are exact: `L` is the largest eigenvalue of the mean
/// Hessian, `G = max_n ||A_n|| r + ||b_n||`, and `f*` is the global minimum.
/// Other models are estimated from Hessian power iterations at sampled
/// points and a long noiseless descent run.
pub fn compute_smoothness<R: Rng + ?Sized>(
    spec: &ModelSpec,
    clients: &[ClientDataset],
    opts: &SmoothnessOptions,
    rng: &mut R,
) -> Result<SmoothnessInfo> {
    if !(opts.radius > 0.0) {
        return Err(Error::param("radius", "must be positive"));
    }
    match spec {
        ModelSpec::Quadratic(q) => {
            let l = q.mean_a().symmetric_eigen().eigenvalues.max();
            let g = q
                .clients()
                .iter()
                .map(|c| c.a.clone().symmetric_eigen().eigenvalues.amax() * opts.radius + c.b.norm())
                .fold(0.0, f64::max);
            let w_star = q.minimizer()?;
            let f_star = 0.5 * w_star.dot(&(q.mean_a() * &w_star)) - q.mean_b().dot(&w_star);
            Ok(SmoothnessInfo {
                l,
                g,
                f_star,
                exact: true,
            })
        }
        _ => estimate_smoothness(spec, clients, opts, rng),
    }
}

fn estimate_smoothness<R: Rng + ?Sized>(
    spec: &ModelSpec,
    clients: &[ClientDataset],
    opts: &SmoothnessOptions,
    rng: &mut R,
) -> Result<SmoothnessInfo> {
    let d = spec.dim();
    let eps = 1e-5;
    let mut l: f64 = 0.0;
    let mut g_max: f64 = 0.0;
    for _ in 0..opts.n_probes.max(1) {
        let w: Vec<f64> = quadratic::random_in_ball(d, opts.radius, rng).iter().copied().collect();
        for c in clients {
            g_max = g_max.max(local_gradient(spec, &w, c)?.norm());
        }
        let mut v: DVector<f64> = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
        v /= v.norm();
        let mut lambda = 0.0;
        for _ in 0..opts.power_iters.max(1) {
            let plus: Vec<f64> = w.iter().zip(v.iter()).map(|(a, b)| a + eps * b).collect();
            let minus: Vec<f64> = w.iter().zip(v.iter()).map(|(a, b)| a - eps * b).collect();
            let (_, gp) = global_loss_and_gradient(spec, &plus, clients)?;
            let (_, gm) = global_loss_and_gradient(spec, &minus, clients)?;
            let hv = DVector::from_fn(d, |i, _| (gp[i] - gm[i]) / (2.0 * eps));
            lambda = hv.norm();
            if lambda == 0.0 {
                break;
            }
            v = hv / lambda;
        }
        l = l.max(lambda);
    }
    let l = l.max(f64::MIN_POSITIVE);

    let mut w = spec.init_params(rng);
    let mut best = f64::INFINITY;
    for _ in 0..opts.fstar_steps {
        let (loss, g) = global_loss_and_gradient(spec, &w, clients)?;
        best = best.min(loss);
        w.axpy(-1.0 / l, &g);
    }
    best = best.min(global_loss(spec, &w, clients)?);
    Ok(SmoothnessInfo {
        l,
        g: g_max,
        f_star: best,
        exact: false,
    })
}
