//! Sampler-assisted online estimation of stationary multivariate time
//! series.
//!
//! A stream of responses and lag-embedded covariates is thinned by a
//! data-dependent selection rule before entering a recursive least-squares
//! estimator. Selection keys on the covariate's leverage score: `samplers`
//! maintains the auxiliary estimates the rule needs (running means, a
//! sparsely updated precision matrix, the threshold quantile), `estimator`
//! carries the coefficient fit, `model` simulates and embeds VARX and
//! seasonal-VARX streams, `diagnostics` checks the design theory
//! numerically, `ingest` replays hourly load tables, and `commands` wires
//! everything into the CLI drivers.

pub mod commands;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod ingest;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod samplers;
pub mod seed;

pub use error::{Error, Result};
