//! Analog multi-access uplink at gradient level.
//!
//! The server receives `g = (1/N) sum_n h_n * grad_n + xi`, with one scalar
//! fading gain per client per round and one independent SαS draw per
//! gradient entry.

use rand::Rng;
use rand_distr::{Distribution, Open01};

use crate::error::{Error, Result};
use crate::param::ParamVector;
use crate::stable_noise::StableParams;

/// Rayleigh scale giving unit mean: `sigma * sqrt(pi / 2) = 1`.
pub const UNIT_MEAN_RAYLEIGH_SIGMA: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FadingModel {
    /// Rayleigh gains with unit mean and variance `(4 - pi) / pi`.
    RayleighUnitMean,
    NoFading,
    /// Fixed positive gain for every client.
    Deterministic(f64),
}

impl FadingModel {
    pub fn validate(&self) -> Result<()> {
        if let FadingModel::Deterministic(v) = *self {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param("fading", format!("deterministic gain {v} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub fading: FadingModel,
    pub noise: StableParams,
    /// `false` gives the ideal channel: unit gains and no noise.
    pub noise_enabled: bool,
}

impl ChannelConfig {
    pub fn noisy(fading: FadingModel, noise: StableParams) -> Self {
        ChannelConfig {
            fading,
            noise,
            noise_enabled: true,
        }
    }

    pub fn ideal(noise: StableParams) -> Self {
        ChannelConfig {
            fading: FadingModel::NoFading,
            noise,
            noise_enabled: false,
        }
    }

    /// Gains for one round. The ideal channel ignores `fading`.
    pub fn round_gains<R: Rng + ?Sized>(&self, n_clients: usize, rng: &mut R) -> Result<Vec<f64>> {
        if self.noise_enabled {
            sample_fading(self.fading, n_clients, rng)
        } else {
            sample_fading(FadingModel::NoFading, n_clients, rng)
        }
    }
}

/// One gain per client for a single round.
pub fn sample_fading<R: Rng + ?Sized>(
    model: FadingModel,
    n_clients: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    model.validate()?;
    if n_clients == 0 {
        return Err(Error::param("n_clients", "must be at least 1"));
    }
    Ok(match model {
        FadingModel::NoFading => vec![1.0; n_clients],
        FadingModel::Deterministic(v) => vec![v; n_clients],
        FadingModel::RayleighUnitMean => (0..n_clients)
            .map(|_| {
                let u: f64 = Open01.sample(rng);
                UNIT_MEAN_RAYLEIGH_SIGMA * (-2.0 * u.ln()).sqrt()
            })
            .collect(),
    })
}

/// Received gradient together with the noise realization that corrupted it.
#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    pub gradient: ParamVector,
    /// `None` on the ideal channel.
    pub noise: Option<ParamVector>,
}

/// Faded superposition plus additive SαS noise.
pub fn aggregate<R: Rng + ?Sized>(
    client_grads: &[ParamVector],
    gains: &[f64],
    cfg: &ChannelConfig,
    rng: &mut R,
) -> Result<ParamVector> {
    Ok(aggregate_detailed(client_grads, gains, cfg, rng)?.gradient)
}

pub fn aggregate_detailed<R: Rng + ?Sized>(
    client_grads: &[ParamVector],
    gains: &[f64],
    cfg: &ChannelConfig,
    rng: &mut R,
) -> Result<Received> {
    let first = client_grads.first().ok_or(Error::Empty("no client gradients"))?;
    let d = first.len();
    if d == 0 {
        return Err(Error::Empty("zero-dimensional gradient"));
    }
    if gains.len() != client_grads.len() {
        return Err(Error::DimensionMismatch {
            expected: client_grads.len(),
            found: gains.len(),
        });
    }
    let mut sum = ParamVector::zeros(d);
    for (grad, &h) in client_grads.iter().zip(gains) {
        grad.check_dim(d)?;
        sum.axpy(h, grad);
    }
    let n = client_grads.len() as f64;
    sum.iter_mut().for_each(|x| *x /= n);

    let noise = if cfg.noise_enabled {
        let xi: ParamVector = (0..d).map(|_| cfg.noise.sample(rng)).collect();
        sum.axpy(1.0, &xi);
        Some(xi)
    } else {
        None
    };
    Ok(Received {
        gradient: sum,
        noise,
    })
}

/// `10 log10(||grad||^2 / ||xi||^2)`; `None` when the noise is identically zero.
pub fn measure_snr(true_grad: &[f64], noise: &[f64]) -> Option<f64> {
    let noise_power: f64 = noise.iter().map(|x| x * x).sum();
    if noise_power == 0.0 {
        return None;
    }
    let signal_power: f64 = true_grad.iter().map(|x| x * x).sum();
    Some(10.0 * (signal_power / noise_power).log10())
}
