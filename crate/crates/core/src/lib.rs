//! Bayesian disease mapping with spatially structured Berkson error in the
//! population offsets.
//!
//! A Poisson count model with a BYM2 log relative risk, latent true
//! populations around reported values, an adaptive Metropolis-within-Gibbs
//! sampler, and a simulation harness for comparing offset models.

pub mod error;
pub mod graph;
pub mod io;
mod math;
pub mod model;
pub mod mcmc;
pub mod offsets;
pub mod sim;

pub use error::{Error, Result};
pub use graph::AreaGraph;
pub use model::{DatasetParts, ModelConfig, OffsetModel, ParameterState, Source, StratifiedDataset};
