//! Bayesian inference of substitution-rate change-points along sequences
//! evolving on a fixed rooted binary phylogeny.
//!
//! The crate provides exact (pruning) and time-machine likelihoods, a
//! tempered SMC sampler at fixed dimension, a trans-dimensional particle
//! marginal Metropolis-Hastings chain over the number of change-points, two
//! ABC baselines, forward simulation, and chain diagnostics.

pub mod abc;
pub mod chain_io;
pub mod config;
pub mod changepoint;
pub mod diagnostics;
pub mod error;
pub mod likelihood;
pub mod pmmh;
pub mod rng;
pub mod sequence;
pub mod simulate;
pub mod smc;
pub mod subst_model;
pub mod tree;

pub use config::{presets, Method, RunConfig};
pub use changepoint::{ChangePointState, PriorSpec, ProposalSpec};
pub use error::{Error, Result};
pub use likelihood::LikelihoodEngine;
pub use pmmh::{run_pmmh, ChainRecord, PmmhConfig};
pub use sequence::{LeafMapping, SequenceData};
pub use simulate::{simulate_dataset, SimulationSpec};
pub use smc::{ParticleSystem, SmcConfig, SmcSampler, TemperSchedule};
pub use subst_model::{JukesCantor, SubstitutionModel};
pub use tree::Tree;
