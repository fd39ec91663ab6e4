use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::analysis::{lemma1_report, verify_theorem1};
use crate::error::Result;
use crate::fl::{RoundRecord, TrainingRun};

use super::config::ExperimentConfig;
use super::run::{run_comparison, threshold_sweep};

/// Crate version plus the `git describe` of the build, when available.
pub const VERSION: &str = env!("OTAFL_VERSION");

pub const ROUND_COLUMNS: [&str; 7] = [
    "round",
    "loss",
    "grad_norm_sq",
    "snr_db",
    "clipped_fraction",
    "accuracy",
    "diverged",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Write `rows` under a one-line comment holding the version and the
/// resolved configuration.
fn write_table(
    path: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "# otafl {VERSION} {command} config={}", cfg.to_json())?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    fs::write(path, buf)?;
    Ok(())
}

fn out_path(cfg: &ExperimentConfig, suffix: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output_dir)?;
    Ok(cfg.output_dir.join(format!("{}_{suffix}.csv", cfg.name)))
}

fn round_row(r: &RoundRecord) -> Vec<String> {
    vec![
        r.round.to_string(),
        r.loss.to_string(),
        r.grad_norm_sq.to_string(),
        opt(r.snr_db),
        r.overall_clipped_fraction.to_string(),
        opt(r.eval_accuracy),
        r.diverged.to_string(),
    ]
}

/// Per-round CSVs for every configured method and replicate, plus a summary.
/// Divergence is recorded in the data, not reported as a failure.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let results = run_comparison(cfg)?;
    let mut written = Vec::new();
    let mut summary = Vec::new();
    for m in &results {
        for (i, (run, seed)) in m.runs.iter().zip(&m.seeds).enumerate() {
            let suffix = if cfg.n_seeds == 1 {
                m.method.name().to_string()
            } else {
                format!("{}_seed{i}", m.method.name())
            };
            let path = out_path(cfg, &suffix)?;
            write_table(&path, "train", cfg, &ROUND_COLUMNS, run.records.iter().map(round_row))?;
            written.push(path);
            summary.push(summary_row(m.method.name(), m.threshold, i, *seed, run));
        }
    }
    let path = out_path(cfg, "summary")?;
    write_table(
        &path,
        "train",
        cfg,
        &[
            "method",
            "threshold",
            "replicate",
            "seed",
            "rounds_run",
            "final_loss",
            "final_accuracy",
            "best_accuracy",
            "diverged",
            "diverged_at",
        ],
        summary,
    )?;
    written.push(path);
    Ok(written)
}

fn summary_row(method: &str, threshold: Option<f64>, i: usize, seed: u64, run: &TrainingRun) -> Vec<String> {
    vec![
        method.to_string(),
        opt(threshold),
        i.to_string(),
        seed.to_string(),
        run.records.len().to_string(),
        run.final_loss().to_string(),
        opt(run.final_accuracy()),
        opt(run.best_accuracy()),
        run.diverged().to_string(),
        run.diverged_at.map_or_else(String::new, |k| k.to_string()),
    ]
}

/// Clip probability table with one slope row per `alpha`.
pub fn cmd_lemma1(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let report = lemma1_report(&cfg.lemma1_config())?;
    let mut rows = Vec::new();
    for s in &report.slopes {
        for r in report.rows.iter().filter(|r| r.alpha == s.alpha) {
            rows.push(vec![
                r.alpha.to_string(),
                r.c.to_string(),
                opt(r.empirical_clip_prob),
                r.asymptote.to_string(),
                String::new(),
                opt(r.oracle_error()),
                r.regime_violation.to_string(),
                r.outside_asymptotic.to_string(),
            ]);
        }
        rows.push(vec![
            s.alpha.to_string(),
            String::new(),
            String::new(),
            String::new(),
            opt(s.slope),
            String::new(),
            String::new(),
            String::new(),
        ]);
    }
    let path = out_path(cfg, "lemma1")?;
    write_table(
        &path,
        "lemma1",
        cfg,
        &[
            "alpha",
            "C",
            "empirical_clip_prob",
            "asymptote",
            "fitted_slope",
            "oracle_error",
            "regime_violation",
            "outside_asymptotic",
        ],
        rows,
    )?;
    Ok(path)
}

/// Bound check along the `K` grid, and the learning-rate sweep.
pub fn cmd_theorem1(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let report = verify_theorem1(&cfg.theorem1_config())?;
    let path = out_path(cfg, "theorem1")?;
    write_table(
        &path,
        "theorem1",
        cfg,
        &[
            "K",
            "empirical_avg_grad_sq",
            "bound_rhs",
            "margin_ratio",
            "classical_bound",
            "holds",
        ],
        report.rows.iter().map(|r| {
            vec![
                r.k.to_string(),
                r.empirical_avg.to_string(),
                r.bound_rhs.to_string(),
                r.margin_ratio.to_string(),
                r.classical_bound.to_string(),
                (r.empirical_avg <= r.bound_rhs).to_string(),
            ]
        }),
    )?;
    let eta_path = out_path(cfg, "theorem1_eta")?;
    write_table(
        &eta_path,
        "theorem1",
        cfg,
        &["eta", "K", "empirical_avg_grad_sq", "bound_rhs", "residual"],
        report.eta_sweep.iter().map(|r| {
            vec![
                r.eta.to_string(),
                r.k.to_string(),
                r.empirical_avg.to_string(),
                r.bound_rhs.to_string(),
                r.residual.to_string(),
            ]
        }),
    )?;
    Ok(vec![path, eta_path])
}

/// Threshold search table with the best cell of each method marked.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let rows = threshold_sweep(cfg)?;
    let path = out_path(cfg, "sweep")?;
    write_table(
        &path,
        "sweep",
        cfg,
        &[
            "method",
            "C",
            "n_seeds",
            "median_final_accuracy",
            "mean_final_accuracy",
            "median_final_loss",
            "diverged_seeds",
            "best",
        ],
        rows.iter().map(|r| {
            vec![
                r.method.name().to_string(),
                r.c.to_string(),
                r.n_seeds.to_string(),
                opt(r.median_final_accuracy),
                opt(r.mean_final_accuracy),
                opt(r.median_final_loss),
                r.diverged_seeds.to_string(),
                r.best.to_string(),
            ]
        }),
    )?;
    Ok(path)
}
