//! Synchronous over-the-air federated training.
//!
//! Each round: broadcast `w_k`, every client computes its (pseudo-)gradient,
//! the channel superimposes the faded gradients and adds SαS noise, the
//! server clips block-wise and steps `w_{k+1} = w_k - eta * clipped`.

use std::time::{Duration, Instant};

use rand::Rng;

use crate::channel::{aggregate_detailed, measure_snr, ChannelConfig};
use crate::clipping::{clip_flat_in_place, median_in_place, ClipMethod};
use crate::data::ClientDataset;
use crate::error::{Error, Result};
use crate::models::{
    global_loss, local_loss_and_gradient, local_update, LocalTraining, ModelSpec, SmoothnessInfo,
};
use crate::param::ParamVector;
use crate::rng::{stream, SimRng, Stream};

/// Loss growth (relative to the initial loss) treated as divergence.
pub const DEFAULT_DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct FLConfig {
    pub n_clients: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub clip: ClipMethod,
    pub channel: ChannelConfig,
    pub seed: u64,
    /// Held-out evaluation cadence in rounds.
    pub eval_every: usize,
    /// Project `w` onto this ball after every server step.
    pub projection_radius: Option<f64>,
    pub divergence_factor: f64,
}

impl FLConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 {
            return Err(Error::param("n_clients", "must be at least 1"));
        }
        if self.rounds == 0 {
            return Err(Error::param("rounds", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be positive"));
        }
        if self.local_epochs == 0 || self.batch_size == 0 {
            return Err(Error::param("local_training", "epochs and batch_size must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::param("eval_every", "must be at least 1"));
        }
        if let Some(r) = self.projection_radius {
            if !(r > 0.0) {
                return Err(Error::param("projection_radius", "must be positive"));
            }
        }
        self.clip.validate()?;
        self.channel.fading.validate()
    }

    /// Conditions under which the convergence bound applies:
    /// `eta <= 2/L` and MAC with `C > sqrt(2) G`.
    pub fn check_theorem_regime(&self, info: &SmoothnessInfo) -> Result<()> {
        if self.learning_rate > 2.0 / info.l {
            return Err(Error::RegimeViolation(format!(
                "learning rate eta = {} violates eta <= 2/L = {}",
                self.learning_rate,
                2.0 / info.l
            )));
        }
        match self.clip {
            ClipMethod::Mac(c) if c > std::f64::consts::SQRT_2 * info.g => Ok(()),
            ClipMethod::Mac(c) => Err(Error::RegimeViolation(format!(
                "clipping threshold C = {c} violates C > sqrt(2) G = {}",
                std::f64::consts::SQRT_2 * info.g
            ))),
            other => Err(Error::RegimeViolation(format!(
                "the bound covers MAC only, not {}",
                other.name()
            ))),
        }
    }

    fn schedule(&self) -> LocalTraining {
        LocalTraining {
            epochs: self.local_epochs,
            batch_size: self.batch_size,
            lr: self.learning_rate,
        }
    }
}

/// Model, client data and optional held-out split of one experiment.
#[derive(Debug, Clone)]
pub struct Federation {
    pub model: ModelSpec,
    pub clients: Vec<ClientDataset>,
    pub held_out: Option<ClientDataset>,
    /// Starting point; the model's default initialisation when `None`.
    pub init: Option<ParamVector>,
}

/// Server post-processing choices compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Mac,
    Gnc,
    /// Noisy aggregation without clipping.
    None,
    /// No fading, no noise, no clipping.
    Ideal,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mac, Method::Gnc, Method::None, Method::Ideal];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Mac => "mac",
            Method::Gnc => "gnc",
            Method::None => "none",
            Method::Ideal => "ideal",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s.trim().to_ascii_lowercase())
    }

    pub fn uses_threshold(&self) -> bool {
        matches!(self, Method::Mac | Method::Gnc)
    }

    /// `base` with the clipping and channel settings of this method.
    pub fn configure(&self, base: &FLConfig, threshold: f64) -> Result<FLConfig> {
        let mut cfg = base.clone();
        match self {
            Method::Mac => {
                cfg.clip = ClipMethod::mac(threshold)?;
                cfg.channel.noise_enabled = true;
            }
            Method::Gnc => {
                cfg.clip = ClipMethod::gnc(threshold)?;
                cfg.channel.noise_enabled = true;
            }
            Method::None => {
                cfg.clip = ClipMethod::None;
                cfg.channel.noise_enabled = true;
            }
            Method::Ideal => {
                cfg.clip = ClipMethod::None;
                cfg.channel.noise_enabled = false;
            }
        }
        Ok(cfg)
    }
}

/// Per-round telemetry.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    /// `f(w_k)`.
    pub loss: f64,
    /// `||grad f(w_k)||^2`.
    pub grad_norm_sq: f64,
    /// `None` on the ideal channel.
    pub snr_db: Option<f64>,
    pub clipped_fraction: Vec<f64>,
    /// Entry-weighted clip fraction over all blocks.
    pub overall_clipped_fraction: f64,
    /// `||w_{k+1} - w_k||`.
    pub update_norm: f64,
    /// `med(g_k) - mean(grad f(w_k))` over the whole received vector.
    pub median_mean_gap: f64,
    /// Median of each block of the received vector, before clipping.
    pub block_medians: Vec<f64>,
    /// Held-out accuracy at `w_{k+1}` on evaluation rounds.
    pub eval_accuracy: Option<f64>,
    pub eval_loss: Option<f64>,
    pub diverged: bool,
    pub wall_time: Duration,
}

/// Evolving state of one run.
#[derive(Debug, Clone)]
pub struct TrainingState {
    pub w: ParamVector,
    pub round: usize,
    pub initial_loss: f64,
    pub diverged: bool,
    channel_rng: SimRng,
    batch_rng: SimRng,
}

impl TrainingState {
    pub fn new(cfg: &FLConfig, fed: &Federation) -> Result<Self> {
        cfg.validate()?;
        if fed.clients.len() != cfg.n_clients {
            return Err(Error::DimensionMismatch {
                expected: cfg.n_clients,
                found: fed.clients.len(),
            });
        }
        let w = match &fed.init {
            Some(w) => {
                w.check_dim(fed.model.dim())?;
                w.clone()
            }
            None => fed.model.init_params(&mut stream(cfg.seed, Stream::Init)),
        };
        let initial_loss = global_loss(&fed.model, &w, &fed.clients)?;
        Ok(TrainingState {
            w,
            round: 0,
            initial_loss,
            diverged: false,
            channel_rng: stream(cfg.seed, Stream::Channel),
            batch_rng: stream(cfg.seed, Stream::Batches),
        })
    }
}

/// Held-out loss and (for classifiers) accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: Option<f64>,
}

/// Loss averaged over `held_out` clients; accuracy pooled over their samples.
pub fn evaluate(spec: &ModelSpec, w: &[f64], held_out: &[ClientDataset]) -> Result<Evaluation> {
    let loss = global_loss(spec, w, held_out)?;
    let accuracy = if spec.is_classifier() {
        let (mut correct, mut total) = (0.0, 0usize);
        for c in held_out {
            if let Some(a) = spec.accuracy(w, &c.data) {
                correct += a * c.len() as f64;
                total += c.len();
            }
        }
        (total > 0).then(|| correct / total as f64)
    } else {
        None
    };
    Ok(Evaluation { loss, accuracy })
}

fn project(w: &mut ParamVector, radius: f64) {
    let n = w.norm();
    if n > radius {
        let s = radius / n;
        w.iter_mut().for_each(|v| *v *= s);
    }
}

/// One communication round. Divergence is reported in the record rather
/// than as an error; a diverged state refuses further rounds.
pub fn run_round(state: &mut TrainingState, cfg: &FLConfig, fed: &Federation) -> Result<RoundRecord> {
    if state.diverged {
        return Err(Error::param("state", "run has already diverged"));
    }
    let started = Instant::now();
    let spec = &fed.model;
    let d = spec.dim();
    let schedule = cfg.schedule();

    let mut loss = 0.0;
    let mut true_grad = ParamVector::zeros(d);
    let mut uploads = Vec::with_capacity(fed.clients.len());
    for client in &fed.clients {
        let (l, g) = local_loss_and_gradient(spec, &state.w, client)?;
        loss += l;
        true_grad.axpy(1.0, &g);
        let upload = if cfg.local_epochs == 1 && cfg.batch_size >= client.len() {
            g
        } else {
            local_update(spec, &state.w, client, schedule, cfg.learning_rate, &mut state.batch_rng)?
        };
        uploads.push(upload);
    }
    let n = fed.clients.len() as f64;
    loss /= n;
    true_grad.iter_mut().for_each(|v| *v /= n);
    let grad_norm_sq = true_grad.norm_sq();

    let gains = cfg.channel.round_gains(fed.clients.len(), &mut state.channel_rng)?;
    let received = aggregate_detailed(&uploads, &gains, &cfg.channel, &mut state.channel_rng)?;
    let snr_db = received.noise.as_ref().and_then(|xi| measure_snr(&true_grad, xi));

    let mut g = received.gradient;
    let median_mean_gap = {
        let mut scratch = g.to_vec();
        median_in_place(&mut scratch) - true_grad.iter().sum::<f64>() / d as f64
    };
    let layout = spec.block_layout();
    let mut scratch = Vec::new();
    let block_medians = layout
        .ranges()
        .map(|r| {
            scratch.clear();
            scratch.extend_from_slice(&g[r]);
            median_in_place(&mut scratch)
        })
        .collect();
    let stats = clip_flat_in_place(&mut g, &layout, cfg.clip)?;
    let clipped_total: usize = stats.iter().map(|s| s.clipped).sum();

    let mut w_next = state.w.clone();
    w_next.axpy(-cfg.learning_rate, &g);
    if let Some(r) = cfg.projection_radius {
        project(&mut w_next, r);
    }
    let update_norm = w_next
        .iter()
        .zip(state.w.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();

    let diverged = !loss.is_finite()
        || loss > cfg.divergence_factor * state.initial_loss.abs().max(f64::MIN_POSITIVE)
        || !w_next.is_finite();

    let k = state.round;
    let mut eval_accuracy = None;
    let mut eval_loss = None;
    let eval_round = (k + 1).is_multiple_of(cfg.eval_every) || k + 1 == cfg.rounds;
    if let (Some(held_out), true, false) = (&fed.held_out, eval_round, diverged) {
        let e = evaluate(spec, &w_next, std::slice::from_ref(held_out))?;
        eval_accuracy = e.accuracy;
        eval_loss = Some(e.loss);
    }

    state.w = w_next;
    state.round += 1;
    state.diverged = diverged;
    Ok(RoundRecord {
        round: k,
        loss,
        grad_norm_sq,
        snr_db,
        clipped_fraction: stats.iter().map(|s| s.clipped_fraction()).collect(),
        overall_clipped_fraction: clipped_total as f64 / d as f64,
        update_norm,
        median_mean_gap,
        block_medians,
        eval_accuracy,
        eval_loss,
        diverged,
        wall_time: started.elapsed(),
    })
}

/// Outcome of a full run.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub records: Vec<RoundRecord>,
    pub final_w: ParamVector,
    /// Round at which the run diverged and stopped.
    pub diverged_at: Option<usize>,
}

impl TrainingRun {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    /// Last held-out accuracy; a diverged run scores zero.
    pub fn final_accuracy(&self) -> Option<f64> {
        if self.diverged() {
            return Some(0.0);
        }
        self.records.iter().rev().find_map(|r| r.eval_accuracy)
    }

    pub fn best_accuracy(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.eval_accuracy)
            .fold(None, |acc, a| Some(acc.map_or(a, |b: f64| b.max(a))))
    }

    /// Training loss at the last recorded round.
    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.loss)
    }

    /// `(1/K) sum_{k<K} ||grad f(w_k)||^2` over the first `k` rounds.
    pub fn mean_grad_norm_sq(&self, k: usize) -> Option<f64> {
        if k == 0 || k > self.records.len() {
            return None;
        }
        Some(self.records[..k].iter().map(|r| r.grad_norm_sq).sum::<f64>() / k as f64)
    }
}

/// `cfg.rounds` rounds, stopping early on divergence.
pub fn run_training(cfg: &FLConfig, fed: &Federation) -> Result<TrainingRun> {
    let mut state = TrainingState::new(cfg, fed)?;
    let mut records = Vec::with_capacity(cfg.rounds);
    let mut diverged_at = None;
    for _ in 0..cfg.rounds {
        let rec = run_round(&mut state, cfg, fed)?;
        let stop = rec.diverged;
        records.push(rec);
        if stop {
            diverged_at = Some(state.round - 1);
            break;
        }
    }
    Ok(TrainingRun {
        records,
        final_w: state.w,
        diverged_at,
    })
}

/// Draw a fresh federation seed from a master seed; used by multi-seed drivers.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = stream(master, Stream::Problem);
    let mut s = 0;
    for _ in 0..=index {
        s = rng.random();
    }
    s
}
