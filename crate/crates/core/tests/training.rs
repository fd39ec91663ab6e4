use std::f64::consts::SQRT_2;

use otafl::analysis::{theorem1_testbed, Theorem1Config};
use otafl::channel::{ChannelConfig, FadingModel};
use otafl::clipping::ClipMethod;
use otafl::data::{make_synthetic_classification, partition, ClientDataset, PartitionKind, PartitionSpec};
use otafl::experiment::{run_comparison, ExperimentConfig, PartitionName};
use otafl::fl::{
    evaluate, run_round, run_training, FLConfig, Federation, Method, RoundRecord, TrainingState,
    DEFAULT_DIVERGENCE_FACTOR,
};
use otafl::models::{global_loss_and_gradient, ModelSpec, QuadraticModel};
use otafl::rng::{seeded, stream, Stream};
use otafl::stable_noise::StableParams;
use otafl::ParamVector;

fn noise() -> StableParams {
    StableParams::new(1.5, 0.1).unwrap()
}

fn base(n_clients: usize, rounds: usize, lr: f64) -> FLConfig {
    FLConfig {
        n_clients,
        rounds,
        learning_rate: lr,
        local_epochs: 1,
        batch_size: usize::MAX,
        clip: ClipMethod::None,
        channel: ChannelConfig::noisy(FadingModel::RayleighUnitMean, noise()),
        seed: 5,
        eval_every: 1,
        projection_radius: None,
        divergence_factor: DEFAULT_DIVERGENCE_FACTOR,
    }
}

fn quadratic_fed(seed: u64) -> Federation {
    let q = QuadraticModel::random(10, 5, (0.5, 4.0), 0.5, &mut seeded(seed)).unwrap();
    let clients = q.client_datasets();
    Federation {
        model: ModelSpec::quadratic(q),
        clients,
        held_out: None,
        init: None,
    }
}

fn logistic_fed(seed: u64, n_clients: usize) -> Federation {
    let ds = make_synthetic_classification(300, 6, 3, 2.0, &mut seeded(seed)).unwrap();
    let (train, test) = ds.split(0.2, &mut seeded(seed + 1)).unwrap();
    let clients = partition(
        &train,
        &PartitionSpec {
            kind: PartitionKind::Iid,
            n_clients,
        },
        &mut seeded(seed + 2),
    )
    .unwrap();
    Federation {
        model: ModelSpec::logistic(6, 3),
        clients,
        held_out: Some(ClientDataset {
            client_id: n_clients,
            data: test,
        }),
        init: None,
    }
}

fn ideal(cfg: &FLConfig) -> FLConfig {
    FLConfig {
        channel: ChannelConfig::ideal(noise()),
        ..cfg.clone()
    }
}

fn without_time(records: &[RoundRecord]) -> Vec<RoundRecord> {
    records
        .iter()
        .map(|r| RoundRecord {
            wall_time: Default::default(),
            ..r.clone()
        })
        .collect()
}

#[test]
fn one_ideal_round_is_a_gradient_step_on_the_quadratic() {
    let fed = quadratic_fed(1);
    let ModelSpec::Quadratic(q) = &fed.model else { unreachable!() };
    let w0: ParamVector = (0..10).map(|i| 0.1 * i as f64 - 0.3).collect();
    let fed = Federation {
        init: Some(w0.clone()),
        ..fed.clone()
    };
    let cfg = ideal(&base(5, 1, 0.2));
    let run = run_training(&cfg, &fed).unwrap();
    let w = nalgebra::DVector::from_column_slice(&w0);
    let expect = &w - 0.2 * (q.mean_a() * &w - q.mean_b());
    for (a, b) in run.final_w.iter().zip(expect.iter()) {
        assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }
}

#[test]
fn noiseless_ideal_matches_centralized_descent() {
    let fed = logistic_fed(2, 4);
    let cfg = ideal(&base(4, 30, 0.5));
    let mut state = TrainingState::new(&cfg, &fed).unwrap();
    let mut w = state.w.clone();
    for _ in 0..cfg.rounds {
        run_round(&mut state, &cfg, &fed).unwrap();
        let (_, g) = global_loss_and_gradient(&fed.model, &w, &fed.clients).unwrap();
        w.axpy(-cfg.learning_rate, &g);
        for (a, b) in state.w.iter().zip(w.iter()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }
}

#[test]
fn mac_updates_stay_within_the_median_window() {
    let fed = logistic_fed(3, 6);
    let cfg = FLConfig {
        clip: ClipMethod::Mac(0.05),
        local_epochs: 2,
        batch_size: 8,
        ..base(6, 40, 0.1)
    };
    let layout = fed.model.block_layout();
    let mut state = TrainingState::new(&cfg, &fed).unwrap();
    for _ in 0..cfg.rounds {
        let before = state.w.clone();
        let rec = run_round(&mut state, &cfg, &fed).unwrap();
        for (range, m) in layout.ranges().zip(&rec.block_medians) {
            let bound = cfg.learning_rate * (m.abs() + 0.05) * (1.0 + 1e-12);
            for i in range {
                assert!((state.w[i] - before[i]).abs() <= bound);
            }
        }
        assert!(rec.clipped_fraction.iter().all(|f| (0.0..=1.0).contains(f)));
    }
}

#[test]
fn reruns_are_bit_identical() {
    let fed = logistic_fed(4, 5);
    let cfg = FLConfig {
        clip: ClipMethod::Mac(0.5),
        local_epochs: 2,
        batch_size: 4,
        ..base(5, 15, 0.05)
    };
    let a = run_training(&cfg, &fed).unwrap();
    let b = run_training(&cfg, &fed).unwrap();
    assert_eq!(without_time(&a.records), without_time(&b.records));
    assert_eq!(a.final_w, b.final_w);
}

#[test]
fn single_round_gives_single_record() {
    let fed = quadratic_fed(5);
    let run = run_training(&base(5, 1, 0.1), &fed).unwrap();
    assert_eq!(run.records.len(), 1);
    assert_eq!(run.records[0].round, 0);
    assert!(FLConfig { rounds: 0, ..base(5, 1, 0.1) }.validate().is_err());
}

#[test]
fn mac_with_a_huge_threshold_follows_the_unclipped_trajectory() {
    let fed = logistic_fed(6, 4);
    let none = ideal(&base(4, 50, 0.3));
    let mac = FLConfig {
        clip: ClipMethod::Mac(1e9),
        ..none.clone()
    };
    let a = run_training(&none, &fed).unwrap();
    let b = run_training(&mac, &fed).unwrap();
    assert_eq!(a.final_w, b.final_w);
    let la: Vec<f64> = a.records.iter().map(|r| r.loss).collect();
    let lb: Vec<f64> = b.records.iter().map(|r| r.loss).collect();
    assert_eq!(la, lb);
}

#[test]
fn ideal_descent_reaches_the_quadratic_minimum() {
    let fed = quadratic_fed(7);
    let ModelSpec::Quadratic(q) = &fed.model else { unreachable!() };
    let w_star = q.minimizer().unwrap();
    let run = run_training(&ideal(&base(5, 400, 0.2)), &fed).unwrap();
    let err: f64 = run
        .final_w
        .iter()
        .zip(w_star.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    assert!(err < 1e-8, "{err}");
}

/// Unclipped heavy-tailed aggregation should, on some seed, push the gradient
/// norm three orders of magnitude past anything MAC sees on the same draws.
#[test]
fn heavy_tails_blow_up_the_unclipped_baseline() {
    let mut worst_ratio: f64 = 0.0;
    for s in 0..20 {
        let bed = theorem1_testbed(&Theorem1Config {
            seed: s,
            ..Theorem1Config::default()
        })
        .unwrap();
        let info = &bed.smoothness;
        let none = FLConfig {
            seed: s,
            ..base(5, 200, 1.0 / info.l)
        };
        let mac = FLConfig {
            clip: ClipMethod::Mac(2.0 * SQRT_2 * info.g),
            ..none.clone()
        };
        let peak = |cfg: &FLConfig| {
            run_training(cfg, &bed.federation)
                .unwrap()
                .records
                .iter()
                .map(|r| if r.grad_norm_sq.is_finite() { r.grad_norm_sq } else { f64::INFINITY })
                .fold(0.0, f64::max)
        };
        worst_ratio = worst_ratio.max(peak(&none) / peak(&mac));
    }
    assert!(worst_ratio > 1e3, "largest None/MAC peak ratio {worst_ratio}");
}

#[test]
fn evaluation_conventions() {
    let fed = logistic_fed(9, 3);
    let held = fed.held_out.clone().unwrap();
    let zero = vec![0.0; fed.model.dim()];
    let e = evaluate(&fed.model, &zero, std::slice::from_ref(&held)).unwrap();
    // All logits tie at zero, so every sample is assigned class 0.
    let share = held.data.class_counts()[0] as f64 / held.len() as f64;
    assert_eq!(e.accuracy, Some(share));
    assert!((e.loss - 3f64.ln()).abs() < 1e-12);

    let qfed = quadratic_fed(10);
    let w = vec![0.2; 10];
    let e = evaluate(&qfed.model, &w, &qfed.clients).unwrap();
    assert_eq!(e.accuracy, None);
    let (f, _) = global_loss_and_gradient(&qfed.model, &w, &qfed.clients).unwrap();
    assert_eq!(e.loss, f);
}

#[test]
fn theorem_regime_is_checked() {
    let fed = quadratic_fed(11);
    let info = otafl::models::compute_smoothness(
        &fed.model,
        &fed.clients,
        &Default::default(),
        &mut stream(0, Stream::Problem),
    )
    .unwrap();
    let ok = FLConfig {
        clip: ClipMethod::Mac(2.0 * info.g),
        ..base(5, 10, 1.0 / info.l)
    };
    ok.check_theorem_regime(&info).unwrap();
    let fast = FLConfig {
        learning_rate: 2.5 / info.l,
        ..ok.clone()
    };
    assert!(fast.check_theorem_regime(&info).is_err());
    let tight = FLConfig {
        clip: ClipMethod::Mac(info.g),
        ..ok.clone()
    };
    assert!(tight.check_theorem_regime(&info).is_err());
    let gnc = FLConfig {
        clip: ClipMethod::Gnc(10.0 * info.g),
        ..ok
    };
    assert!(gnc.check_theorem_regime(&info).is_err());
}

#[test]
fn default_parameters_complete_and_log_every_field() {
    let mut cfg = ExperimentConfig::named("defaults");
    cfg.training.rounds = 20;
    let runs = run_comparison(&cfg).unwrap();
    assert_eq!(runs.len(), 4);
    for m in &runs {
        let rec = &m.runs[0].records;
        assert_eq!(rec.len(), 20);
        assert!(rec.iter().all(|r| r.loss.is_finite() && r.grad_norm_sq.is_finite()));
        assert_eq!(rec[0].clipped_fraction.len(), 2);
        assert!(rec.iter().any(|r| r.eval_accuracy.is_some()));
        assert_eq!(rec[0].snr_db.is_some(), m.method != Method::Ideal);
    }
}

/// Median final training loss over 20 seeds should order
/// Ideal <= MAC <= GNC <= None on the default synthetic task.
#[test]
fn final_loss_ordering_over_seeds() {
    let mut cfg = ExperimentConfig::named("ordering");
    cfg.data.partition = PartitionName::Iid;
    cfg.n_seeds = 20;
    cfg.training.eval_every = cfg.training.rounds;
    let runs = run_comparison(&cfg).unwrap();
    let med = |m: Method| {
        runs.iter()
            .find(|r| r.method == m)
            .and_then(|r| r.median_final_loss())
            .unwrap()
    };
    let (i, mac, gnc, none) = (med(Method::Ideal), med(Method::Mac), med(Method::Gnc), med(Method::None));
    assert!(
        i <= mac && mac <= gnc && gnc <= none,
        "median final loss: ideal {i}, mac {mac}, gnc {gnc}, none {none}"
    );
}

#[test]
fn logistic_smoothness_tracks_the_feature_gram() {
    let data = make_synthetic_classification(400, 5, 2, 2.0, &mut seeded(12)).unwrap();
    let n = data.len() as f64;
    // Features augmented with the bias coordinate.
    let p = data.feature_dim() + 1;
    let mut gram = nalgebra::DMatrix::<f64>::zeros(p, p);
    for i in 0..data.len() {
        let v = nalgebra::DVector::from_iterator(p, data.x(i).iter().copied().chain([1.0]));
        gram += &v * v.transpose() / n;
    }
    let analytic = 0.25 * gram.symmetric_eigen().eigenvalues.max();
    let clients = [ClientDataset { client_id: 0, data }];
    let model = ModelSpec::logistic(5, 2);
    let info = otafl::models::compute_smoothness(&model, &clients, &Default::default(), &mut seeded(0)).unwrap();
    let ratio = info.l / analytic;
    assert!((0.5..=2.0).contains(&ratio), "estimated L {} vs analytic {analytic}", info.l);
}
