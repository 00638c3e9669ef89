//! Bayesian semiparametric regression for multivariate Gaussian responses.
//!
//! Means and log-variances are additive in parametric and radial-basis
//! smooth terms with spike-slab selection; the response correlation matrix
//! gets a common, grouped-correlations or grouped-variables prior. The
//! sampler, posterior summaries and a simulation harness live here; the
//! `mvsmooth` binary wraps them.

pub mod config;
pub mod correlation;
pub mod data;
pub mod design;
pub mod distributions;
pub mod error;
pub mod likelihood;
pub mod linalg;
pub mod model;
pub mod output;
pub mod posterior;
pub mod rng;
pub mod samples;
pub mod sampler;
pub mod simharness;
pub mod state;
pub mod stats;
pub mod tuning;

pub use data::{ingest_csv, Dataset};
pub use design::{build_designs, DesignMatrices};
pub use error::{ModelError, Result};
pub use model::{CorrelationModelSpec, CorrelationVariant, Link, ModelSpec, PriorConfig, TermSpec};
pub use sampler::{run_chain, Sampler, Schedule};
pub use samples::ChainSamples;
pub use state::SamplerState;
