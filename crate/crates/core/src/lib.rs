//! Simulation of analog over-the-air federated learning when the multi-access
//! channel adds symmetric alpha-stable noise to the aggregated gradient.
//!
//! The server-side defence is median anchored clipping (MAC): subtract the
//! vector-median of the received gradient, clip every entry's deviation to a
//! threshold `C`, then add the median back. Gradient norm clipping (GNC) and
//! unclipped aggregation are provided as baselines.
//!
//! Module map:
//!
//! * [`stable_noise`]: exact SαS sampling and clip-probability utilities.
//! * [`channel`]: fading, superposition averaging and additive noise.
//! * [`clipping`]: vector-median, MAC, GNC and block-wise application.
//! * [`models`]: quadratic, softmax-regression and MLP objectives with
//!   hand-derived gradients.
//! * [`data`]: synthetic and CSV datasets, IID and Dirichlet partitioning.
//! * [`fl`]: the synchronous training loop and per-round telemetry.
//! * [`analysis`]: clip-probability scaling, the convergence bound and its
//!   Monte Carlo verification.
//! * [`experiment`]: config files, CSV outputs and the `otafl` subcommands.

// `!(x > 0.0)` is the NaN-rejecting form used throughout for parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod channel;
pub mod clipping;
pub mod data;
pub mod error;
pub mod experiment;
pub mod fl;
pub mod models;
pub mod param;
pub mod rng;
pub mod stable_noise;
pub mod stats;

pub use error::{Error, Result};
pub use param::ParamVector;
