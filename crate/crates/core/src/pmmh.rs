//! Particle marginal Metropolis-Hastings over the number of change-points.
//!
//! Each iteration proposes a new `k`, runs a fresh evidence estimator at it
//! and accepts with the marginal MH ratio built from the two estimates. The
//! incumbent's estimate is stored and never refreshed, which keeps the
//! chain an exact approximation of the ideal marginal sampler.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::changepoint::{k_proposal_log_density, propose_k, ChangePointState, PriorSpec, ProposalSpec};
use crate::error::{Error, Result};
use crate::likelihood::LikelihoodEngine;
use crate::rng::{self, tag};
use crate::sequence::SequenceData;
use crate::smc::{mh_accept, SmcConfig, SmcSampler, TemperSchedule};
use crate::tree::Tree;

/// An evidence estimate together with one state drawn from the
/// approximate posterior at the same `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub log_evidence: f64,
    pub state: ChangePointState,
}

/// Anything that returns a nonnegative unbiased estimate of `p(x | k)`.
///
/// `Error::Degenerate` means the estimate is zero; the chain treats it as a
/// rejected proposal.
pub trait EvidenceEstimator: Sync {
    fn estimate(&self, k: usize, seed: u64) -> Result<Estimate>;
}

/// The tempered SMC sampler as an evidence estimator.
pub struct SmcEstimator<'a> {
    pub sampler: SmcSampler<'a>,
}

impl EvidenceEstimator for SmcEstimator<'_> {
    fn estimate(&self, k: usize, seed: u64) -> Result<Estimate> {
        let system = self.sampler.run_seeded(k, seed)?;
        let mut r = rng::stream(seed, &[tag::SELECT]);
        let (_, state) = system.select_particle(&mut r)?;
        Ok(Estimate {
            log_evidence: system.log_evidence(),
            state: state.clone(),
        })
    }
}

fn default_exponent() -> f64 {
    2.0
}

fn default_one() -> usize {
    1
}

fn default_retries() -> usize {
    10
}

/// Settings of an exact (or time-machine) PMMH run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmmhConfig {
    /// Maximum number of records, including the initial one.
    pub iterations: usize,
    /// Optional wall-clock limit in seconds; the run stops at whichever
    /// budget is reached first.
    #[serde(default)]
    pub time_budget: Option<f64>,
    pub particles: usize,
    /// Number of tempering steps `T`.
    pub steps: usize,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    #[serde(default = "default_one")]
    pub kernel_sweeps: usize,
    #[serde(default)]
    pub proposal: ProposalSpec,
    pub prior: PriorSpec,
    /// Time-machine cut-off `g`; 1 is the exact likelihood.
    #[serde(default = "default_one")]
    pub cutoff: usize,
    pub seed: u64,
    #[serde(default = "default_retries")]
    pub init_retries: usize,
}

impl PmmhConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("at least one iteration is required".into()));
        }
        if let Some(t) = self.time_budget {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("time budget {t} must be positive")));
            }
        }
        self.prior.validate()?;
        self.proposal.validate()?;
        self.smc_config().map(|_| ())
    }

    pub fn smc_config(&self) -> Result<SmcConfig> {
        let mut smc = SmcConfig::new(self.particles, TemperSchedule::power(self.steps, self.exponent)?);
        smc.kernel_sweeps = self.kernel_sweeps;
        smc.proposal = self.proposal.clone();
        smc.validate()?;
        Ok(smc)
    }

    pub fn chain_settings(&self, n_sites: usize) -> ChainSettings {
        ChainSettings {
            prior: self.prior.clone(),
            k_width: self.proposal.k_width,
            n_sites,
            iterations: self.iterations,
            time_budget: self.time_budget,
            seed: self.seed,
            init_retries: self.init_retries,
        }
    }
}

/// What the outer chain needs, independent of the evidence estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSettings {
    pub prior: PriorSpec,
    pub k_width: usize,
    pub n_sites: usize,
    pub iterations: usize,
    pub time_budget: Option<f64>,
    pub seed: u64,
    pub init_retries: usize,
}

/// One row of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub iteration: usize,
    pub state: ChangePointState,
    /// Stored `log p^N(x | k)` of the current `k`.
    pub log_evidence: f64,
    pub accepted: bool,
    pub proposal_k: usize,
    /// Seconds since the start of the run.
    pub wall_time: f64,
}

impl ChainRecord {
    pub fn k(&self) -> usize {
        self.state.k()
    }
}

/// `log` of the PMMH acceptance ratio for moving `k -> k*`.
pub fn log_acceptance_ratio(
    prior: &PriorSpec,
    k_width: usize,
    current_k: usize,
    current_log_evidence: f64,
    proposed_k: usize,
    proposed_log_evidence: f64,
) -> f64 {
    let (lo, hi) = (prior.k_min(), prior.k_max());
    let log_prior_ratio = prior.log_prior_k(proposed_k) - prior.log_prior_k(current_k);
    if log_prior_ratio == f64::NEG_INFINITY || proposed_log_evidence == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let log_q_ratio = k_proposal_log_density(proposed_k, current_k, k_width, lo, hi)
        - k_proposal_log_density(current_k, proposed_k, k_width, lo, hi);
    (proposed_log_evidence - current_log_evidence) + log_prior_ratio + log_q_ratio
}

/// Whether `k` change-points can be placed among `m` sites.
fn fits(k: usize, m: usize) -> bool {
    k <= m.saturating_sub(1)
}

/// Draws the initial `k` from the prior and runs the estimator at it,
/// retrying with fresh streams if the estimate degenerates.
pub fn pmmh_init<E: EvidenceEstimator + ?Sized>(estimator: &E, settings: &ChainSettings) -> Result<ChainRecord> {
    let support: Vec<usize> = settings
        .prior
        .k_support
        .iter()
        .copied()
        .filter(|&k| fits(k, settings.n_sites))
        .collect();
    if support.is_empty() {
        return Err(Error::Config(format!(
            "no k in the prior support fits {} sites",
            settings.n_sites
        )));
    }
    let mut last = None;
    for attempt in 0..=settings.init_retries as u64 {
        let mut r = rng::stream(settings.seed, &[tag::CHAIN, 0, attempt]);
        let k = support[r.random_range(0..support.len())];
        match estimator.estimate(k, rng::derive_seed(settings.seed, &[tag::ESTIMATE, 0, attempt])) {
            Ok(est) => {
                return Ok(ChainRecord {
                    iteration: 0,
                    state: est.state,
                    log_evidence: est.log_evidence,
                    accepted: true,
                    proposal_k: k,
                    wall_time: 0.0,
                })
            }
            Err(e @ Error::Degenerate { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// One PMMH transition from `current` to iteration `current.iteration + 1`.
/// `wall_time` of the returned record is left for the caller to fill in.
pub fn pmmh_step<E: EvidenceEstimator + ?Sized>(
    estimator: &E,
    settings: &ChainSettings,
    current: &ChainRecord,
) -> Result<ChainRecord> {
    let iteration = current.iteration + 1;
    let mut r = rng::stream(settings.seed, &[tag::CHAIN, iteration as u64]);
    let k = current.k();
    let proposal = propose_k(k, settings.k_width, settings.prior.k_min(), settings.prior.k_max(), &mut r);
    let k_star = proposal.value;

    let mut next = ChainRecord {
        iteration,
        accepted: false,
        proposal_k: k_star,
        ..current.clone()
    };
    if !fits(k_star, settings.n_sites) || settings.prior.log_prior_k(k_star) == f64::NEG_INFINITY {
        return Ok(next);
    }
    let seed = rng::derive_seed(settings.seed, &[tag::ESTIMATE, iteration as u64]);
    let est = match estimator.estimate(k_star, seed) {
        Ok(est) => est,
        Err(Error::Degenerate { .. }) => return Ok(next),
        Err(e) => return Err(e),
    };
    let log_alpha = log_acceptance_ratio(
        &settings.prior,
        settings.k_width,
        k,
        current.log_evidence,
        k_star,
        est.log_evidence,
    );
    if mh_accept(log_alpha, &mut r) {
        next.state = est.state;
        next.log_evidence = est.log_evidence;
        next.accepted = true;
    }
    Ok(next)
}

/// Runs the chain, handing each record to `observer` as it is produced.
pub fn run_chain_with<E, F>(estimator: &E, settings: &ChainSettings, mut observer: F) -> Result<Vec<ChainRecord>>
where
    E: EvidenceEstimator + ?Sized,
    F: FnMut(&ChainRecord) -> Result<()>,
{
    if settings.iterations == 0 {
        return Err(Error::Config("at least one iteration is required".into()));
    }
    let start = Instant::now();
    let mut current = pmmh_init(estimator, settings)?;
    current.wall_time = start.elapsed().as_secs_f64();
    observer(&current)?;
    let mut records = vec![current];
    while records.len() < settings.iterations {
        if settings
            .time_budget
            .is_some_and(|budget| start.elapsed().as_secs_f64() >= budget)
        {
            break;
        }
        let mut next = pmmh_step(estimator, settings, records.last().unwrap())?;
        next.wall_time = start.elapsed().as_secs_f64();
        observer(&next)?;
        records.push(next);
    }
    Ok(records)
}

pub fn run_chain<E: EvidenceEstimator + ?Sized>(estimator: &E, settings: &ChainSettings) -> Result<Vec<ChainRecord>> {
    run_chain_with(estimator, settings, |_| Ok(()))
}

/// Run-level bookkeeping of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub records: usize,
    pub accepted: usize,
    /// Accepted steps over `R - 1`; absent for a single record.
    pub acceptance_ratio: Option<f64>,
    pub visits: BTreeMap<usize, usize>,
    pub model_probs: BTreeMap<usize, f64>,
    pub wall_seconds: f64,
}

pub fn run_summary(records: &[ChainRecord]) -> RunSummary {
    let steps = records.len().saturating_sub(1);
    let accepted = records.iter().skip(1).filter(|r| r.accepted).count();
    let mut visits = BTreeMap::new();
    for r in records {
        *visits.entry(r.k()).or_insert(0) += 1;
    }
    let model_probs = visits
        .iter()
        .map(|(&k, &c)| (k, c as f64 / records.len() as f64))
        .collect();
    RunSummary {
        records: records.len(),
        accepted,
        acceptance_ratio: (steps > 0).then(|| accepted as f64 / steps as f64),
        visits,
        model_probs,
        wall_seconds: records.last().map_or(0.0, |r| r.wall_time),
    }
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct PmmhRun {
    pub records: Vec<ChainRecord>,
    pub summary: RunSummary,
}

/// Builds the SMC estimator for `config` and runs the chain.
pub fn run_pmmh(config: &PmmhConfig, data: &SequenceData, tree: &Tree) -> Result<PmmhRun> {
    run_pmmh_with(config, data, tree, |_| Ok(()))
}

pub fn run_pmmh_with<F>(config: &PmmhConfig, data: &SequenceData, tree: &Tree, observer: F) -> Result<PmmhRun>
where
    F: FnMut(&ChainRecord) -> Result<()>,
{
    config.validate()?;
    let engine = LikelihoodEngine::new(tree.clone(), config.cutoff)?;
    let smc = config.smc_config()?;
    let estimator = SmcEstimator {
        sampler: SmcSampler::new(&engine, data, &config.prior, &smc)?,
    };
    let records = run_chain_with(&estimator, &config.chain_settings(data.n_sites()), observer)?;
    let summary = run_summary(&records);
    Ok(PmmhRun { records, summary })
}
