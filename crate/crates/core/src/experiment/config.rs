use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{log_grid, Lemma1Config, Theorem1Config};
use crate::channel::{ChannelConfig, FadingModel};
use crate::clipping::ClipMethod;
use crate::data::{PartitionKind, PartitionSpec};
use crate::error::{Error, Result};
use crate::fl::{FLConfig, Method, DEFAULT_DIVERGENCE_FACTOR};
use crate::models::Activation;
use crate::stable_noise::{DifferenceLaw, StableParams};

/// Top-level experiment file. Only `name` is required; every section and
/// key falls back to the documented default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub clipping: ClippingConfig,
    #[serde(default)]
    pub lemma1: Lemma1Section,
    #[serde(default)]
    pub theorem1: Theorem1Section,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_n_seeds() -> usize {
    1
}

fn default_methods() -> Vec<String> {
    Method::ALL.iter().map(|m| m.name().to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Quadratic,
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationName {
    Relu,
    Tanh,
}

impl From<ActivationName> for Activation {
    fn from(a: ActivationName) -> Self {
        match a {
            ActivationName::Relu => Activation::Relu,
            ActivationName::Tanh => Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// MLP hidden width.
    pub hidden: usize,
    pub activation: ActivationName,
    /// Quadratic problems: dimension, per-client Hessian eigenvalue range and
    /// radius of the ball holding the local minimizers.
    pub dim: usize,
    pub eig_min: f64,
    pub eig_max: f64,
    pub center_radius: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Logistic,
            hidden: 32,
            activation: ActivationName::Relu,
            dim: 10,
            eig_min: 0.5,
            eig_max: 4.0,
            center_radius: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionName {
    Iid,
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Read samples from this CSV instead of generating them.
    pub csv_path: Option<PathBuf>,
    pub label_column: String,
    pub n_samples: usize,
    pub feature_dim: usize,
    pub n_classes: usize,
    pub separation: f64,
    pub test_fraction: f64,
    pub partition: PartitionName,
    pub concentration: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            csv_path: None,
            label_column: "label".to_string(),
            n_samples: 2000,
            feature_dim: 20,
            n_classes: 2,
            separation: 2.0,
            test_fraction: 0.2,
            partition: PartitionName::Dirichlet,
            concentration: 0.3,
        }
    }
}

impl DataConfig {
    pub fn partition_spec(&self, n_clients: usize) -> PartitionSpec {
        PartitionSpec {
            kind: match self.partition {
                PartitionName::Iid => PartitionKind::Iid,
                PartitionName::Dirichlet => PartitionKind::Dirichlet(self.concentration),
            },
            n_clients,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub n_clients: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub eval_every: usize,
    pub projection_radius: Option<f64>,
    pub divergence_factor: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            n_clients: 50,
            rounds: 200,
            learning_rate: 0.03,
            local_epochs: 5,
            batch_size: 10,
            eval_every: 10,
            projection_radius: None,
            divergence_factor: DEFAULT_DIVERGENCE_FACTOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FadingName {
    Rayleigh,
    None,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub alpha: f64,
    pub tau: f64,
    pub fading: FadingName,
    /// Gain of every client when `fading = "deterministic"`.
    pub gain: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            alpha: 1.5,
            tau: 0.1,
            fading: FadingName::Rayleigh,
            gain: 1.0,
        }
    }
}

impl ChannelSection {
    pub fn fading_model(&self) -> FadingModel {
        match self.fading {
            FadingName::Rayleigh => FadingModel::RayleighUnitMean,
            FadingName::None => FadingModel::NoFading,
            FadingName::Deterministic => FadingModel::Deterministic(self.gain),
        }
    }

    pub fn noise(&self) -> Result<StableParams> {
        StableParams::new(self.alpha, self.tau)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClippingConfig {
    pub mac_threshold: f64,
    pub gnc_threshold: f64,
    /// Thresholds tried by `sweep`, shared by MAC and GNC.
    pub sweep_grid: Vec<f64>,
}

impl Default for ClippingConfig {
    fn default() -> Self {
        ClippingConfig {
            mac_threshold: 0.5,
            gnc_threshold: 0.5,
            sweep_grid: vec![0.25, 0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawName {
    Exact,
    Sqrt2Scale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lemma1Section {
    pub alphas: Vec<f64>,
    pub tau: f64,
    /// Explicit thresholds; when empty, `n_c` log-spaced points over `[c_min, c_max]`.
    pub c_grid: Vec<f64>,
    pub c_min: f64,
    pub c_max: f64,
    pub n_c: usize,
    pub g: f64,
    pub samples: usize,
    pub law: LawName,
}

impl Default for Lemma1Section {
    fn default() -> Self {
        Lemma1Section {
            alphas: vec![1.1, 1.5, 1.9],
            tau: 0.1,
            c_grid: Vec::new(),
            c_min: 1.0,
            c_max: 10.0,
            n_c: 6,
            g: 0.0,
            samples: 4_000_000,
            law: LawName::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Theorem1Section {
    pub dim: usize,
    pub n_clients: usize,
    pub radius: f64,
    pub eig_min: f64,
    pub eig_max: f64,
    pub center_radius: f64,
    pub k_grid: Vec<usize>,
    pub n_seeds: usize,
    /// Defaults to `1/L`.
    pub eta: Option<f64>,
    /// Defaults to `2 sqrt(2) G`.
    pub c: Option<f64>,
    pub ideal: bool,
    pub eta_scales: Vec<f64>,
    pub p_c: Option<f64>,
}

impl Default for Theorem1Section {
    fn default() -> Self {
        let d = Theorem1Config::default();
        Theorem1Section {
            dim: d.dim,
            n_clients: d.n_clients,
            radius: d.radius,
            eig_min: d.eig_range.0,
            eig_max: d.eig_range.1,
            center_radius: d.center_radius,
            k_grid: d.k_grid,
            n_seeds: d.n_seeds,
            eta: None,
            c: None,
            ideal: false,
            eta_scales: d.eta_scales,
            p_c: None,
        }
    }
}

impl ExperimentConfig {
    /// Defaults for everything but the name.
    pub fn named(name: impl Into<String>) -> Self {
        ExperimentConfig {
            name: name.into(),
            output_dir: default_output_dir(),
            seed: 0,
            n_seeds: default_n_seeds(),
            methods: default_methods(),
            model: ModelConfig::default(),
            data: DataConfig::default(),
            training: TrainingConfig::default(),
            channel: ChannelSection::default(),
            clipping: ClippingConfig::default(),
            lemma1: Lemma1Section::default(),
            theorem1: Theorem1Section::default(),
        }
    }

    /// Parse TOML text. Errors carry the line and column of the offending key.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(describe_toml_error(text, &e)))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Single-line rendering used in CSV header comments.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config is always representable as JSON")
    }

    pub fn parsed_methods(&self) -> Result<Vec<Method>> {
        if self.methods.is_empty() {
            return Err(Error::Config("`methods` must list at least one method".into()));
        }
        self.methods
            .iter()
            .map(|m| {
                Method::parse(m).ok_or_else(|| {
                    Error::Config(format!("unknown method `{m}`; expected one of mac, gnc, none, ideal"))
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("`name` = {:?} must be a non-empty file stem", self.name)));
        }
        if self.n_seeds == 0 {
            return Err(Error::Config("`n_seeds` must be at least 1".into()));
        }
        self.parsed_methods()?;
        self.channel.noise()?;
        self.fl_config(0)?.validate()?;
        if self.clipping.sweep_grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::Config("`clipping.sweep_grid` entries must be positive".into()));
        }
        Ok(())
    }

    /// Training configuration shared by all methods; the clip rule and
    /// channel switch are set per method by [`Method::configure`].
    pub fn fl_config(&self, seed: u64) -> Result<FLConfig> {
        let t = &self.training;
        Ok(FLConfig {
            n_clients: t.n_clients,
            rounds: t.rounds,
            learning_rate: t.learning_rate,
            local_epochs: t.local_epochs,
            batch_size: t.batch_size,
            clip: ClipMethod::None,
            channel: ChannelConfig::noisy(self.channel.fading_model(), self.channel.noise()?),
            seed,
            eval_every: t.eval_every,
            projection_radius: t.projection_radius,
            divergence_factor: t.divergence_factor,
        })
    }

    pub fn threshold(&self, method: Method) -> f64 {
        match method {
            Method::Gnc => self.clipping.gnc_threshold,
            _ => self.clipping.mac_threshold,
        }
    }

    pub fn lemma1_config(&self) -> Lemma1Config {
        let l = &self.lemma1;
        Lemma1Config {
            alphas: l.alphas.clone(),
            tau: l.tau,
            c_grid: if l.c_grid.is_empty() {
                log_grid(l.c_min, l.c_max, l.n_c)
            } else {
                l.c_grid.clone()
            },
            g: l.g,
            n_samples: l.samples,
            law: match l.law {
                LawName::Exact => DifferenceLaw::Exact,
                LawName::Sqrt2Scale => DifferenceLaw::Sqrt2Scale,
            },
            seed: self.seed,
        }
    }

    pub fn theorem1_config(&self) -> Theorem1Config {
        let t = &self.theorem1;
        Theorem1Config {
            dim: t.dim,
            n_clients: t.n_clients,
            radius: t.radius,
            eig_range: (t.eig_min, t.eig_max),
            center_radius: t.center_radius,
            alpha: self.channel.alpha,
            tau: self.channel.tau,
            fading: self.channel.fading_model(),
            k_grid: t.k_grid.clone(),
            n_seeds: t.n_seeds,
            eta: t.eta,
            c: t.c,
            ideal: t.ideal,
            eta_scales: t.eta_scales.clone(),
            p_c_override: t.p_c,
            seed: self.seed,
        }
    }
}

fn describe_toml_error(text: &str, err: &toml::de::Error) -> String {
    match err.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!("line {line}, column {col}: {}", err.message())
        }
        None => err.message().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml("name = \"x\"").unwrap();
        assert_eq!(cfg, ExperimentConfig::named("x"));
        assert_eq!(cfg.training.n_clients, 50);
        assert_eq!(cfg.training.learning_rate, 0.03);
        assert_eq!(cfg.training.local_epochs, 5);
        assert_eq!(cfg.training.batch_size, 10);
        assert_eq!(cfg.channel.alpha, 1.5);
        assert_eq!(cfg.channel.tau, 0.1);
        assert_eq!(cfg.data.partition, PartitionName::Dirichlet);
        assert_eq!(cfg.data.concentration, 0.3);
        cfg.validate().unwrap();
    }

    #[test]
    fn missing_name_is_reported() {
        let err = ExperimentConfig::from_toml("seed = 3\n").unwrap_err();
        assert!(err.to_string().contains("name"), "{err}");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = ExperimentConfig::from_toml("name = \"x\"\n[training]\nrounds = \"many\"\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = ExperimentConfig::from_toml("name = \"x\"\n\n[model]\nkindd = \"mlp\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 4") && msg.contains("kindd"), "{msg}");
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig::named("rt");
        cfg.training.projection_radius = Some(2.0);
        cfg.theorem1.eta = Some(0.1);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_method_rejected() {
        let mut cfg = ExperimentConfig::named("m");
        cfg.methods = vec!["mac".into(), "median".into()];
        assert!(cfg.validate().unwrap_err().to_string().contains("median"));
    }
}
