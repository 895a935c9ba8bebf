//! Likelihood-free baselines.
//!
//! Two samplers target the same ABC posterior: PMMH driven by an ABC-SMC
//! evidence estimate, and population ABC-SMC for model selection with
//! importance weights over a mixture of perturbation kernels.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::changepoint::{
    changepoint_proposal_log_density, k_proposal_log_density, propose_changepoints, propose_k, propose_rates,
    rate_proposal_log_density, ChangePointState, PriorSpec, ProposalSpec,
};
use crate::error::{Error, Result};
use crate::pmmh::{run_chain_with, run_summary, ChainRecord, ChainSettings, Estimate, EvidenceEstimator, PmmhRun};
use crate::rng::{self, tag, StreamRng};
use crate::sequence::SequenceData;
use crate::simulate::simulate_pseudo_data;
use crate::smc::{log_mean_exp, mh_accept, run_target, MoveStats, Resampling, RunShape, SmcTarget};
use crate::tree::Tree;

/// Number of cells where two equally shaped datasets differ.
pub fn summary_distance(sim: &SequenceData, obs: &SequenceData) -> Result<usize> {
    if sim.n_sequences() != obs.n_sequences() || sim.n_sites() != obs.n_sites() {
        return Err(Error::Data(format!(
            "cannot compare {}x{} with {}x{} data",
            sim.n_sequences(),
            sim.n_sites(),
            obs.n_sequences(),
            obs.n_sites()
        )));
    }
    Ok(sim.cells().iter().zip(obs.cells()).filter(|(a, b)| a != b).count())
}

/// `steps` tolerances decreasing geometrically from `start` to `end`.
pub fn geometric_tolerances(start: f64, end: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 || !(end > 0.0) || !(start >= end) || !start.is_finite() {
        return Err(Error::Config(format!(
            "cannot build {steps} tolerances from {start} down to {end}"
        )));
    }
    if steps == 1 {
        return Ok(vec![end]);
    }
    let ratio = (end / start).powf(1.0 / (steps - 1) as f64);
    let mut out: Vec<f64> = (0..steps).map(|t| start * ratio.powi(t as i32)).collect();
    out[steps - 1] = end;
    Ok(out)
}

/// The default schedule: from `n m` down to `n m / 3`.
pub fn default_tolerances(n: usize, m: usize, steps: usize) -> Result<Vec<f64>> {
    let cells = (n * m).max(1) as f64;
    geometric_tolerances(cells, cells / 3.0, steps)
}

fn check_tolerances(tolerances: &[f64]) -> Result<()> {
    if tolerances.is_empty()
        || tolerances.windows(2).any(|w| !(w[0] > w[1]))
        || !(tolerances.last().unwrap() > &0.0)
        || tolerances.iter().any(|t| !t.is_finite())
    {
        return Err(Error::Config(
            "tolerances must be finite, positive and strictly decreasing".into(),
        ));
    }
    Ok(())
}

fn default_twenty() -> usize {
    20
}

fn default_one() -> usize {
    1
}

/// Settings of the ABC-SMC evidence estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcConfig {
    /// Pseudo-datasets `M` simulated per particle.
    #[serde(default = "default_twenty")]
    pub pseudo_datasets: usize,
    #[serde(default = "default_twenty")]
    pub particles: usize,
    /// `epsilon_1 > ... > epsilon_T > 0`.
    pub tolerances: Vec<f64>,
    #[serde(default)]
    pub proposal: ProposalSpec,
    #[serde(default = "default_one")]
    pub kernel_sweeps: usize,
    #[serde(default)]
    pub resampling: Resampling,
}

impl AbcConfig {
    pub fn new(tolerances: Vec<f64>) -> Self {
        Self {
            pseudo_datasets: 20,
            particles: 20,
            tolerances,
            proposal: ProposalSpec::default(),
            kernel_sweeps: 1,
            resampling: Resampling::Multinomial,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pseudo_datasets == 0 || self.particles == 0 {
            return Err(Error::Config(
                "ABC needs at least one particle and one pseudo-dataset".into(),
            ));
        }
        check_tolerances(&self.tolerances)?;
        self.proposal.validate()
    }
}

/// A particle with its prior density and the distances of its `M`
/// pseudo-datasets to the observations.
#[derive(Debug, Clone, PartialEq)]
pub struct AbcParticle {
    pub state: ChangePointState,
    pub log_prior: f64,
    pub distances: Vec<usize>,
}

impl AsRef<ChangePointState> for AbcParticle {
    fn as_ref(&self) -> &ChangePointState {
        &self.state
    }
}

impl AbcParticle {
    /// `log((1/M) #{r : d_r <= epsilon})`.
    pub fn log_fraction(&self, epsilon: f64) -> f64 {
        let hits = self.distances.iter().filter(|&&d| d as f64 <= epsilon).count();
        (hits as f64 / self.distances.len() as f64).ln()
    }
}

/// Distances of `count` pseudo-datasets simulated at `state`.
fn pseudo_distances(
    tree: &Tree,
    obs: &SequenceData,
    state: &ChangePointState,
    count: usize,
    rng: &mut StreamRng,
) -> Result<Vec<usize>> {
    let base: u64 = rng.random();
    (0..count)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng::stream(base, &[tag::PSEUDO, r as u64]);
            let sim = simulate_pseudo_data(tree, state, obs.n_sites(), &mut stream)?;
            summary_distance(&sim, obs)
        })
        .collect()
}

/// ABC-SMC at fixed `k`: the bridging targets are ABC posteriors at the
/// decreasing tolerances, with indicator-fraction likelihoods.
pub struct AbcSampler<'a> {
    pub tree: &'a Tree,
    pub data: &'a SequenceData,
    pub prior: &'a PriorSpec,
    pub config: &'a AbcConfig,
}

impl<'a> AbcSampler<'a> {
    pub fn new(tree: &'a Tree, data: &'a SequenceData, prior: &'a PriorSpec, config: &'a AbcConfig) -> Result<Self> {
        if data.n_sequences() != tree.n_leaves() {
            return Err(Error::Data(format!(
                "tree has {} leaves but data has {} sequences",
                tree.n_leaves(),
                data.n_sequences()
            )));
        }
        prior.validate()?;
        config.validate()?;
        Ok(Self {
            tree,
            data,
            prior,
            config,
        })
    }

    fn epsilon(&self, t: usize) -> f64 {
        if t == 0 {
            f64::INFINITY
        } else {
            self.config.tolerances[t - 1]
        }
    }

    fn particle(&self, state: ChangePointState, rng: &mut StreamRng) -> Result<AbcParticle> {
        let distances = pseudo_distances(self.tree, self.data, &state, self.config.pseudo_datasets, rng)?;
        Ok(AbcParticle {
            log_prior: self.prior.log_prior_given_k(&state, self.data.n_sites()),
            state,
            distances,
        })
    }

    fn try_move(&self, particle: &mut AbcParticle, candidate: ChangePointState, log_q_ratio: f64, epsilon: f64, rng: &mut StreamRng) -> bool {
        let next = self.particle(candidate, rng).expect("valid state and data");
        let log_ratio = next.log_fraction(epsilon) - particle.log_fraction(epsilon) + next.log_prior - particle.log_prior + log_q_ratio;
        let log_ratio = if log_ratio.is_nan() { f64::NEG_INFINITY } else { log_ratio };
        let accept = mh_accept(log_ratio, rng);
        if accept {
            *particle = next;
        }
        accept
    }

    /// One rate move then one change-point move, invariant for the ABC
    /// posterior at `epsilon`.
    pub fn sweep(&self, particle: &mut AbcParticle, epsilon: f64, rng: &mut StreamRng) -> MoveStats {
        let spec = &self.config.proposal;
        let mut stats = MoveStats::default();
        let proposal = propose_rates(particle.state.rates(), spec.rate_sigma, rng);
        let candidate = ChangePointState::new(particle.state.changepoints().to_vec(), proposal.value.clone())
            .expect("log-normal rates stay positive");
        stats.rate_proposed += 1;
        if self.try_move(particle, candidate, proposal.log_q_ratio(), epsilon, rng) {
            stats.rate_accepted += 1;
        }
        if particle.state.k() > 0 {
            stats.changepoint_proposed += 1;
            if let Some(proposal) = propose_changepoints(particle.state.changepoints(), spec.s_width, self.data.n_sites(), rng) {
                let candidate = ChangePointState::new(proposal.value.clone(), particle.state.rates().to_vec())
                    .expect("proposal keeps change-points valid");
                if self.try_move(particle, candidate, proposal.log_q_ratio(), epsilon, rng) {
                    stats.changepoint_accepted += 1;
                }
            }
        }
        stats
    }

    pub fn run_seeded(&self, k: usize, base: u64) -> Result<crate::smc::ParticleSystem<AbcParticle>> {
        run_target(
            self,
            k,
            base,
            &RunShape {
                particles: self.config.particles,
                steps: self.config.tolerances.len(),
                resampling: self.config.resampling,
                record_history: false,
            },
        )
    }
}

impl SmcTarget for AbcSampler<'_> {
    type Particle = AbcParticle;

    fn initial(&self, k: usize, rng: &mut StreamRng) -> Result<AbcParticle> {
        let state = self.prior.sample(k, self.data.n_sites(), rng)?;
        self.particle(state, rng)
    }

    fn log_incremental_weight(&self, particle: &AbcParticle, t: usize) -> f64 {
        let now = particle.log_fraction(self.epsilon(t));
        if now == f64::NEG_INFINITY {
            return now;
        }
        now - particle.log_fraction(self.epsilon(t - 1))
    }

    fn mutate(&self, particle: &mut AbcParticle, t: usize, rng: &mut StreamRng) -> MoveStats {
        let epsilon = self.epsilon(t);
        (0..self.config.kernel_sweeps)
            .map(|_| self.sweep(particle, epsilon, rng))
            .fold(MoveStats::default(), MoveStats::merge)
    }
}

impl EvidenceEstimator for AbcSampler<'_> {
    fn estimate(&self, k: usize, seed: u64) -> Result<Estimate> {
        let system = self.run_seeded(k, seed)?;
        let mut r = rng::stream(seed, &[tag::SELECT]);
        let (_, state) = system.select_particle(&mut r)?;
        Ok(Estimate {
            log_evidence: system.log_evidence(),
            state: state.clone(),
        })
    }
}

fn default_retries() -> usize {
    10
}

/// Settings of a PMMH run with the ABC evidence estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmmhAbcConfig {
    pub iterations: usize,
    #[serde(default)]
    pub time_budget: Option<f64>,
    pub prior: PriorSpec,
    pub abc: AbcConfig,
    pub seed: u64,
    #[serde(default = "default_retries")]
    pub init_retries: usize,
}

impl PmmhAbcConfig {
    pub fn chain_settings(&self, n_sites: usize) -> ChainSettings {
        ChainSettings {
            prior: self.prior.clone(),
            k_width: self.abc.proposal.k_width,
            n_sites,
            iterations: self.iterations,
            time_budget: self.time_budget,
            seed: self.seed,
            init_retries: self.init_retries,
        }
    }
}

pub fn run_pmmh_abc(config: &PmmhAbcConfig, data: &SequenceData, tree: &Tree) -> Result<PmmhRun> {
    run_pmmh_abc_with(config, data, tree, |_| Ok(()))
}

pub fn run_pmmh_abc_with<F>(config: &PmmhAbcConfig, data: &SequenceData, tree: &Tree, observer: F) -> Result<PmmhRun>
where
    F: FnMut(&ChainRecord) -> Result<()>,
{
    let sampler = AbcSampler::new(tree, data, &config.prior, &config.abc)?;
    let records = run_chain_with(&sampler, &config.chain_settings(data.n_sites()), observer)?;
    let summary = run_summary(&records);
    Ok(PmmhRun { records, summary })
}

fn default_population() -> usize {
    1000
}

fn default_attempts() -> usize {
    1000
}

/// Settings of population ABC-SMC for model selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToniConfig {
    /// Accepted particles per generation.
    #[serde(default = "default_population")]
    pub particles: usize,
    pub tolerances: Vec<f64>,
    #[serde(default)]
    pub proposal: ProposalSpec,
    /// Pseudo-datasets per candidate; weights use the accepted fraction.
    #[serde(default = "default_one")]
    pub replicates: usize,
    /// Candidates tried per particle slot before the generation is
    /// declared stalled.
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
    pub seed: u64,
}

impl ToniConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 || self.replicates == 0 || self.max_attempts == 0 {
            return Err(Error::Config(
                "particles, replicates and max_attempts must be positive".into(),
            ));
        }
        check_tolerances(&self.tolerances)?;
        self.proposal.validate()
    }
}

/// Acceptance bookkeeping of one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub epsilon: f64,
    pub attempts: usize,
    pub accepted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedState {
    pub state: ChangePointState,
    /// Normalized over the whole population.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToniResult {
    pub population: Vec<WeightedState>,
    pub model_probs: BTreeMap<usize, f64>,
    /// `(sum w)^2 / sum w^2` within each model.
    pub ess: BTreeMap<usize, f64>,
    pub counts: BTreeMap<usize, usize>,
    pub generations: Vec<GenerationStats>,
}

/// One generation's population grouped by model.
struct Population {
    /// Per model: states and normalized (within population) weights.
    models: BTreeMap<usize, (Vec<ChangePointState>, Vec<f64>)>,
    marginals: BTreeMap<usize, f64>,
}

impl Population {
    fn new(particles: Vec<(ChangePointState, f64)>) -> Self {
        let total: f64 = particles.iter().map(|(_, w)| w).sum();
        let mut models: BTreeMap<usize, (Vec<ChangePointState>, Vec<f64>)> = BTreeMap::new();
        for (state, w) in particles {
            let entry = models.entry(state.k()).or_default();
            entry.0.push(state);
            entry.1.push(w / total);
        }
        let marginals = models.iter().map(|(&k, (_, w))| (k, w.iter().sum())).collect();
        Self { models, marginals }
    }

    fn draw<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (i, &w) in weights.iter().enumerate() {
            if u < w {
                return i;
            }
            u -= w;
        }
        weights.len() - 1
    }
}

/// Log density of the state perturbation kernel `from -> to` (same `k`).
fn perturbation_log_density(from: &ChangePointState, to: &ChangePointState, spec: &ProposalSpec, m: usize) -> f64 {
    let cp = if from.k() == 0 {
        0.0
    } else {
        changepoint_proposal_log_density(from.changepoints(), to.changepoints(), spec.s_width, m)
    };
    cp + rate_proposal_log_density(from.rates(), to.rates(), spec.rate_sigma)
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return f64::NEG_INFINITY;
    }
    log_mean_exp(&v) + (v.len() as f64).ln()
}

struct ToniRun<'a> {
    tree: &'a Tree,
    data: &'a SequenceData,
    prior: &'a PriorSpec,
    config: &'a ToniConfig,
}

impl ToniRun<'_> {
    fn fits(&self, k: usize) -> bool {
        k <= self.data.n_sites().saturating_sub(1)
    }

    /// Candidate from generation `previous`, or from the prior if none.
    fn candidate(&self, previous: Option<&Population>, rng: &mut StreamRng) -> Result<Option<ChangePointState>> {
        let m = self.data.n_sites();
        let Some(pop) = previous else {
            let support = &self.prior.k_support;
            let k = support[rng.random_range(0..support.len())];
            if !self.fits(k) {
                return Ok(None);
            }
            return self.prior.sample(k, m, rng).map(Some);
        };
        let ks: Vec<usize> = pop.marginals.keys().copied().collect();
        let probs: Vec<f64> = pop.marginals.values().copied().collect();
        let k_star = ks[Population::draw(&probs, rng)];
        let spec = &self.config.proposal;
        let k = propose_k(k_star, spec.k_width, self.prior.k_min(), self.prior.k_max(), rng).value;
        if self.prior.log_prior_k(k) == f64::NEG_INFINITY || !self.fits(k) {
            return Ok(None);
        }
        let Some((states, weights)) = pop.models.get(&k) else {
            return Ok(None);
        };
        let parent = &states[Population::draw(weights, rng)];
        let rates = propose_rates(parent.rates(), spec.rate_sigma, rng).value;
        let changepoints = if k == 0 {
            Vec::new()
        } else {
            match propose_changepoints(parent.changepoints(), spec.s_width, m, rng) {
                Some(p) => p.value,
                None => return Ok(None),
            }
        };
        Ok(Some(ChangePointState::new(changepoints, rates)?))
    }

    /// Log importance weight of an accepted candidate with hit fraction `b`.
    fn log_weight(&self, previous: Option<&Population>, state: &ChangePointState, log_b: f64) -> f64 {
        let Some(pop) = previous else {
            return log_b;
        };
        let m = self.data.n_sites();
        let spec = &self.config.proposal;
        let k = state.k();
        let (lo, hi) = (self.prior.k_min(), self.prior.k_max());
        let log_s1 = log_sum_exp(
            pop.marginals
                .iter()
                .map(|(&j, &p)| p.ln() + k_proposal_log_density(j, k, spec.k_width, lo, hi)),
        );
        let (states, weights) = &pop.models[&k];
        let log_s2 = log_sum_exp(
            states
                .iter()
                .zip(weights)
                .map(|(s, &w)| w.ln() + perturbation_log_density(s, state, spec, m)),
        ) - pop.marginals[&k].ln();
        self.prior.log_prior(state, m) + log_b - log_s1 - log_s2
    }

    fn generation(&self, g: usize, previous: Option<&Population>) -> Result<(Vec<(ChangePointState, f64)>, GenerationStats)> {
        let epsilon = self.config.tolerances[g];
        let slots: Vec<Result<(ChangePointState, f64, usize)>> = (0..self.config.particles)
            .into_par_iter()
            .map(|i| {
                let mut r = rng::stream(self.config.seed, &[tag::PERTURB, g as u64, i as u64]);
                for attempt in 1..=self.config.max_attempts {
                    let Some(state) = self.candidate(previous, &mut r)? else {
                        continue;
                    };
                    let d = pseudo_distances(self.tree, self.data, &state, self.config.replicates, &mut r)?;
                    let hits = d.iter().filter(|&&d| d as f64 <= epsilon).count();
                    if hits > 0 {
                        let log_b = (hits as f64 / d.len() as f64).ln();
                        let w = self.log_weight(previous, &state, log_b);
                        return Ok((state, w, attempt));
                    }
                }
                Err(Error::ToleranceStall {
                    generation: g + 1,
                    epsilon,
                    attempts: self.config.max_attempts,
                })
            })
            .collect();
        let mut attempts = 0;
        let mut accepted = Vec::with_capacity(slots.len());
        for slot in slots {
            let (state, log_w, a) = slot?;
            attempts += a;
            accepted.push((state, log_w));
        }
        let max = accepted.iter().map(|(_, w)| *w).fold(f64::NEG_INFINITY, f64::max);
        let population = accepted
            .into_iter()
            .map(|(s, w)| (s, (w - max).exp()))
            .collect();
        Ok((
            population,
            GenerationStats {
                epsilon,
                attempts,
                accepted: self.config.particles,
            },
        ))
    }
}

/// Population ABC-SMC over `(k, state)` with decreasing tolerances.
pub fn run_abc_smc_model_selection(
    config: &ToniConfig,
    prior: &PriorSpec,
    data: &SequenceData,
    tree: &Tree,
) -> Result<ToniResult> {
    config.validate()?;
    prior.validate()?;
    if data.n_sequences() != tree.n_leaves() {
        return Err(Error::Data(format!(
            "tree has {} leaves but data has {} sequences",
            tree.n_leaves(),
            data.n_sequences()
        )));
    }
    let run = ToniRun {
        tree,
        data,
        prior,
        config,
    };
    let mut previous: Option<Population> = None;
    let mut generations = Vec::new();
    let mut last = Vec::new();
    for g in 0..config.tolerances.len() {
        let (particles, stats) = run.generation(g, previous.as_ref())?;
        generations.push(stats);
        previous = Some(Population::new(particles.clone()));
        last = particles;
    }

    let total: f64 = last.iter().map(|(_, w)| w).sum();
    let population: Vec<WeightedState> = last
        .into_iter()
        .map(|(state, w)| WeightedState { state, weight: w / total })
        .collect();
    let mut model_probs = BTreeMap::new();
    let mut sums: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
    for p in &population {
        let e = sums.entry(p.state.k()).or_default();
        e.0 += p.weight;
        e.1 += p.weight * p.weight;
        e.2 += 1;
    }
    let mut ess = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for (&k, &(s, s2, c)) in &sums {
        model_probs.insert(k, s);
        ess.insert(k, s * s / s2);
        counts.insert(k, c);
    }
    Ok(ToniResult {
        population,
        model_probs,
        ess,
        counts,
        generations,
    })
}
