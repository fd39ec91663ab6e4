use crate::data::{load_csv_dataset, make_synthetic_classification, partition, ClientDataset};
use crate::error::{Error, Result};
use crate::fl::{derive_seed, run_training, Federation, Method, TrainingRun};
use crate::models::{ModelSpec, QuadraticModel};
use crate::rng::{stream, Stream};
use crate::stats::{mean, median_of};

use super::config::{ExperimentConfig, ModelKind};

/// Seed of replicate `index`; every stream of that replicate derives from it.
pub fn replicate_seed(cfg: &ExperimentConfig, index: usize) -> u64 {
    derive_seed(cfg.seed, index as u64)
}

/// Model, client data and held-out split for one replicate.
pub fn build_federation(cfg: &ExperimentConfig, seed: u64) -> Result<Federation> {
    let n_clients = cfg.training.n_clients;
    if cfg.model.kind == ModelKind::Quadratic {
        let m = &cfg.model;
        let q = QuadraticModel::random(
            m.dim,
            n_clients,
            (m.eig_min, m.eig_max),
            m.center_radius,
            &mut stream(seed, Stream::Problem),
        )?;
        let clients = q.client_datasets();
        return Ok(Federation {
            model: ModelSpec::quadratic(q),
            clients,
            held_out: None,
            init: None,
        });
    }

    let d = &cfg.data;
    let dataset = match &d.csv_path {
        Some(path) => load_csv_dataset(path, &d.label_column)?,
        None => make_synthetic_classification(
            d.n_samples,
            d.feature_dim,
            d.n_classes,
            d.separation,
            &mut stream(seed, Stream::Data),
        )?,
    };
    let (train, test) = dataset.split(d.test_fraction, &mut stream(seed, Stream::Split))?;
    let clients = partition(&train, &d.partition_spec(n_clients), &mut stream(seed, Stream::Partition))?;
    let (p, c) = (dataset.feature_dim(), dataset.n_classes());
    let model = match cfg.model.kind {
        ModelKind::Mlp => ModelSpec::mlp(p, cfg.model.hidden, c, cfg.model.activation.into()),
        _ => ModelSpec::logistic(p, c),
    };
    Ok(Federation {
        model,
        clients,
        held_out: (!test.is_empty()).then_some(ClientDataset {
            client_id: n_clients,
            data: test,
        }),
        init: None,
    })
}

/// Runs of one method at one threshold, indexed by replicate.
#[derive(Debug, Clone)]
pub struct MethodRuns {
    pub method: Method,
    /// `None` for methods without a threshold.
    pub threshold: Option<f64>,
    pub seeds: Vec<u64>,
    pub runs: Vec<TrainingRun>,
}

impl MethodRuns {
    pub fn final_accuracies(&self) -> Vec<f64> {
        self.runs.iter().filter_map(TrainingRun::final_accuracy).collect()
    }

    pub fn final_losses(&self) -> Vec<f64> {
        self.runs.iter().map(TrainingRun::final_loss).collect()
    }

    pub fn n_diverged(&self) -> usize {
        self.runs.iter().filter(|r| r.diverged()).count()
    }

    pub fn median_final_accuracy(&self) -> Option<f64> {
        median_of(&self.final_accuracies())
    }

    pub fn mean_final_accuracy(&self) -> Option<f64> {
        let a = self.final_accuracies();
        (!a.is_empty()).then(|| mean(&a))
    }

    /// Median over finite final losses; diverged replicates count as `+inf`.
    pub fn median_final_loss(&self) -> Option<f64> {
        let l: Vec<f64> = self
            .runs
            .iter()
            .map(|r| {
                let l = r.final_loss();
                if r.diverged() || !l.is_finite() {
                    f64::INFINITY
                } else {
                    l
                }
            })
            .collect();
        median_of(&l)
    }
}

/// Every `(method, threshold)` pair over `cfg.n_seeds` replicates. All
/// pairs of one replicate share its data, partition and channel draws.
pub fn run_grid(cfg: &ExperimentConfig, pairs: &[(Method, Option<f64>)]) -> Result<Vec<MethodRuns>> {
    cfg.validate()?;
    let mut out: Vec<MethodRuns> = pairs
        .iter()
        .map(|&(method, threshold)| MethodRuns {
            method,
            threshold,
            seeds: Vec::with_capacity(cfg.n_seeds),
            runs: Vec::with_capacity(cfg.n_seeds),
        })
        .collect();
    for i in 0..cfg.n_seeds {
        let seed = replicate_seed(cfg, i);
        let fed = build_federation(cfg, seed)?;
        let base = cfg.fl_config(seed)?;
        for slot in out.iter_mut() {
            let threshold = slot.threshold.unwrap_or(cfg.threshold(slot.method));
            let run_cfg = slot.method.configure(&base, threshold)?;
            slot.runs.push(run_training(&run_cfg, &fed)?);
            slot.seeds.push(seed);
        }
    }
    Ok(out)
}

/// The configured methods at their configured thresholds.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<Vec<MethodRuns>> {
    let pairs: Vec<_> = cfg
        .parsed_methods()?
        .into_iter()
        .map(|m| (m, m.uses_threshold().then(|| cfg.threshold(m))))
        .collect();
    run_grid(cfg, &pairs)
}

/// One `(method, C)` cell of a threshold search.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub method: Method,
    pub c: f64,
    pub n_seeds: usize,
    pub median_final_accuracy: Option<f64>,
    pub mean_final_accuracy: Option<f64>,
    pub median_final_loss: Option<f64>,
    pub diverged_seeds: usize,
    /// Best cell of its method: highest median accuracy, or lowest median
    /// loss for models without accuracy. Ties go to the smaller `C`.
    pub best: bool,
}

/// Threshold search for every thresholded method in `cfg.methods`.
pub fn threshold_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let grid = &cfg.clipping.sweep_grid;
    if grid.is_empty() {
        return Err(Error::Config("`clipping.sweep_grid` is empty".into()));
    }
    let mut grid = grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let methods: Vec<Method> = cfg
        .parsed_methods()?
        .into_iter()
        .filter(Method::uses_threshold)
        .collect();
    if methods.is_empty() {
        return Err(Error::Config("sweep needs at least one of mac, gnc in `methods`".into()));
    }
    let pairs: Vec<_> = methods
        .iter()
        .flat_map(|&m| grid.iter().map(move |&c| (m, Some(c))))
        .collect();
    let runs = run_grid(cfg, &pairs)?;
    let mut rows: Vec<SweepRow> = runs
        .iter()
        .map(|r| SweepRow {
            method: r.method,
            c: r.threshold.expect("sweep cells carry a threshold"),
            n_seeds: r.runs.len(),
            median_final_accuracy: r.median_final_accuracy(),
            mean_final_accuracy: r.mean_final_accuracy(),
            median_final_loss: r.median_final_loss(),
            diverged_seeds: r.n_diverged(),
            best: false,
        })
        .collect();
    for m in methods {
        let score = |r: &SweepRow| match r.median_final_accuracy {
            Some(a) => a,
            None => -r.median_final_loss.unwrap_or(f64::INFINITY),
        };
        let mut best: Option<usize> = None;
        for (i, r) in rows.iter().enumerate().filter(|(_, r)| r.method == m) {
            if best.is_none_or(|b| score(r) > score(&rows[b])) {
                best = Some(i);
            }
        }
        if let Some(b) = best {
            rows[b].best = true;
        }
    }
    Ok(rows)
}
