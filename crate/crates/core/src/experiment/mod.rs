//! Config-driven experiment runner behind the `otafl` binary.
//!
//! Every command writes CSV files into `output_dir`, each starting with a
//! `#` comment line that records the crate version and the fully resolved
//! configuration. Reruns with the same configuration are byte-identical.

mod config;
mod output;
mod run;

pub use config::{
    ActivationName, ChannelSection, ClippingConfig, DataConfig, ExperimentConfig, FadingName, LawName,
    Lemma1Section, ModelConfig, ModelKind, PartitionName, Theorem1Section, TrainingConfig,
};
pub use output::{cmd_lemma1, cmd_sweep, cmd_theorem1, cmd_train, ROUND_COLUMNS, VERSION};
pub use run::{build_federation, replicate_seed, run_comparison, run_grid, threshold_sweep, MethodRuns, SweepRow};
