//! Tempered SMC sampler at a fixed number of change-points.
//!
//! Particles start from the prior and are carried through the bridging
//! targets `likelihood^kappa_t * prior` by resampling, importance
//! reweighting and Metropolis-Hastings moves. The product of mean
//! unnormalized weights is an unbiased estimate of the evidence `p(x | k)`.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::changepoint::{propose_changepoints, propose_rates, ChangePointState, PriorSpec, ProposalSpec};
use crate::error::{domain, Error, Result};
use crate::likelihood::LikelihoodEngine;
use crate::rng::{self, tag, StreamRng};
use crate::sequence::SequenceData;

/// Temperatures `0 = kappa_0 < kappa_1 < ... < kappa_T = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperSchedule {
    temperatures: Vec<f64>,
}

impl TemperSchedule {
    /// `kappa_t = (t / T)^exponent`.
    pub fn power(steps: usize, exponent: f64) -> Result<Self> {
        if steps == 0 {
            return Err(domain("an SMC schedule needs at least one step"));
        }
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(domain(format!("schedule exponent {exponent} must be positive")));
        }
        let temperatures = (0..=steps)
            .map(|t| {
                if t == steps {
                    1.0
                } else {
                    (t as f64 / steps as f64).powf(exponent)
                }
            })
            .collect();
        Self::from_temperatures(temperatures)
    }

    pub fn from_temperatures(temperatures: Vec<f64>) -> Result<Self> {
        if temperatures.len() < 2
            || temperatures[0] != 0.0
            || *temperatures.last().unwrap() != 1.0
            || temperatures.windows(2).any(|w| !(w[0] < w[1]))
        {
            return Err(domain(
                "temperatures must increase strictly from exactly 0 to exactly 1",
            ));
        }
        Ok(Self { temperatures })
    }

    /// Number of steps `T`.
    pub fn steps(&self) -> usize {
        self.temperatures.len() - 1
    }

    pub fn temperatures(&self) -> &[f64] {
        &self.temperatures
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    #[default]
    Multinomial,
    Systematic,
}

/// Draws `count` ancestor indices with probabilities proportional to
/// `exp(log_weights)`.
pub fn resample<R: Rng + ?Sized>(
    log_weights: &[f64],
    count: usize,
    scheme: Resampling,
    rng: &mut R,
) -> Option<Vec<usize>> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return None;
    }
    let weights: Vec<f64> = log_weights.iter().map(|&w| (w - max).exp()).collect();
    match scheme {
        Resampling::Multinomial => {
            let dist = WeightedIndex::new(&weights).ok()?;
            Some((0..count).map(|_| dist.sample(rng)).collect())
        }
        Resampling::Systematic => {
            let total: f64 = weights.iter().sum();
            let step = total / count as f64;
            let mut u = rng.random::<f64>() * step;
            let mut out = Vec::with_capacity(count);
            let mut cum = weights[0];
            let mut i = 0;
            for _ in 0..count {
                while u >= cum && i + 1 < weights.len() {
                    i += 1;
                    cum += weights[i];
                }
                out.push(i);
                u += step;
            }
            Some(out)
        }
    }
}

/// `log((1/N) sum_i exp(x_i))`, `-inf` if every term is `-inf`.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + (sum / values.len() as f64).ln()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmcConfig {
    pub particles: usize,
    pub schedule: TemperSchedule,
    /// MH sweeps per particle per step; one sweep is a rate move followed
    /// by a change-point move.
    pub kernel_sweeps: usize,
    pub proposal: ProposalSpec,
    #[serde(default)]
    pub resampling: Resampling,
    /// Keep every step's particles for trace dumps.
    #[serde(default)]
    pub record_history: bool,
}

impl SmcConfig {
    pub fn new(particles: usize, schedule: TemperSchedule) -> Self {
        Self {
            particles,
            schedule,
            kernel_sweeps: 1,
            proposal: ProposalSpec::default(),
            resampling: Resampling::Multinomial,
            record_history: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::Config("at least one particle is required".into()));
        }
        self.proposal.validate()
    }
}

/// A particle with its cached log-likelihood and log-prior (given `k`).
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub state: ChangePointState,
    pub log_likelihood: f64,
    pub log_prior: f64,
}

/// Accept counts of the MH kernels over one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStats {
    pub rate_proposed: usize,
    pub rate_accepted: usize,
    pub changepoint_proposed: usize,
    pub changepoint_accepted: usize,
}

impl MoveStats {
    pub fn merge(mut self, other: MoveStats) -> MoveStats {
        self.rate_proposed += other.rate_proposed;
        self.rate_accepted += other.rate_accepted;
        self.changepoint_proposed += other.changepoint_proposed;
        self.changepoint_accepted += other.changepoint_accepted;
        self
    }
}

impl AsRef<ChangePointState> for Particle {
    fn as_ref(&self) -> &ChangePointState {
        &self.state
    }
}

/// Output of one SMC run.
#[derive(Debug, Clone)]
pub struct ParticleSystem<P = Particle> {
    pub k: usize,
    /// Particles at the final step `T`.
    pub particles: Vec<P>,
    /// Unnormalized log-weights for steps `0..=T`.
    pub log_weights: Vec<Vec<f64>>,
    /// `ancestors[t]` holds the indices resampled from step `t`, `t < T`.
    pub ancestors: Vec<Vec<usize>>,
    /// `log((1/N) sum_i W_t^i)` for each step.
    pub log_evidence_terms: Vec<f64>,
    /// Every step's particle states when requested.
    pub history: Option<Vec<Vec<ChangePointState>>>,
    pub moves: MoveStats,
}

impl<P: AsRef<ChangePointState>> ParticleSystem<P> {
    /// `log p^N(x | k)`.
    pub fn log_evidence(&self) -> f64 {
        self.log_evidence_terms.iter().sum()
    }

    /// Recomputes the evidence from the stored weights.
    pub fn recompute_log_evidence(&self) -> f64 {
        self.log_weights.iter().map(|w| log_mean_exp(w)).sum()
    }

    /// Draws a final particle with probability proportional to `W_T`.
    pub fn select_particle<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(usize, &ChangePointState)> {
        let last = self.log_weights.last().expect("at least one step");
        let idx = resample(last, 1, Resampling::Multinomial, rng)
            .ok_or(Error::Degenerate { step: self.log_weights.len() - 1 })?[0];
        Ok((idx, self.particles[idx].as_ref()))
    }

    /// Writes `t,i,ancestor,log_weight,k,s,theta` rows for every recorded step.
    pub fn write_trace<W: Write>(&self, mut out: W) -> Result<()> {
        let history = self
            .history
            .as_ref()
            .ok_or_else(|| domain("particle history was not recorded"))?;
        writeln!(out, "t,i,ancestor,log_weight,k,s,theta")?;
        for (t, states) in history.iter().enumerate() {
            for (i, state) in states.iter().enumerate() {
                let ancestor = if t == 0 {
                    String::new()
                } else {
                    self.ancestors[t - 1][i].to_string()
                };
                writeln!(
                    out,
                    "{t},{i},{ancestor},{:?},{},{},{}",
                    self.log_weights[t][i],
                    state.k(),
                    join(state.changepoints()),
                    join(state.rates()),
                )?;
            }
        }
        Ok(())
    }
}

pub(crate) fn join<T: std::fmt::Debug>(values: &[T]) -> String {
    values
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// `kappa * loglik` with `-inf` preserved for zero likelihood.
fn tempered(kappa: f64, log_likelihood: f64) -> f64 {
    if log_likelihood == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        kappa * log_likelihood
    }
}

/// Metropolis-Hastings accept test in log space; NaN ratios reject.
pub(crate) fn mh_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

/// The SMC sampler bound to one dataset, likelihood and prior.
pub struct SmcSampler<'a> {
    pub engine: &'a LikelihoodEngine,
    pub data: &'a SequenceData,
    pub prior: &'a PriorSpec,
    pub config: &'a SmcConfig,
}

impl<'a> SmcSampler<'a> {
    pub fn new(
        engine: &'a LikelihoodEngine,
        data: &'a SequenceData,
        prior: &'a PriorSpec,
        config: &'a SmcConfig,
    ) -> Result<Self> {
        engine.check_data(data)?;
        prior.validate()?;
        config.validate()?;
        Ok(Self {
            engine,
            data,
            prior,
            config,
        })
    }

    fn particle(&self, state: ChangePointState) -> Particle {
        let m = self.data.n_sites();
        Particle {
            log_likelihood: self.engine.segmented_log_likelihood(&state, self.data),
            log_prior: self.prior.log_prior_given_k(&state, m),
            state,
        }
    }

    /// One MH sweep invariant for `likelihood^kappa * prior`.
    pub fn sweep<R: Rng + ?Sized>(&self, particle: &mut Particle, kappa: f64, rng: &mut R) -> MoveStats {
        let m = self.data.n_sites();
        let spec = &self.config.proposal;
        let mut stats = MoveStats::default();

        let proposal = propose_rates(particle.state.rates(), spec.rate_sigma, rng);
        let candidate = ChangePointState::new(particle.state.changepoints().to_vec(), proposal.value.clone())
            .expect("log-normal rates stay positive");
        let next = self.particle(candidate);
        stats.rate_proposed += 1;
        let log_ratio = tempered(kappa, next.log_likelihood) - tempered(kappa, particle.log_likelihood)
            + next.log_prior
            - particle.log_prior
            + proposal.log_q_ratio();
        if mh_accept(log_ratio, rng) {
            *particle = next;
            stats.rate_accepted += 1;
        }

        if particle.state.k() > 0 {
            stats.changepoint_proposed += 1;
            if let Some(proposal) = propose_changepoints(particle.state.changepoints(), spec.s_width, m, rng) {
                let candidate = ChangePointState::new(proposal.value.clone(), particle.state.rates().to_vec())
                    .expect("proposal keeps change-points valid");
                let next = self.particle(candidate);
                let log_ratio = tempered(kappa, next.log_likelihood)
                    - tempered(kappa, particle.log_likelihood)
                    + next.log_prior
                    - particle.log_prior
                    + proposal.log_q_ratio();
                if mh_accept(log_ratio, rng) {
                    *particle = next;
                    stats.changepoint_accepted += 1;
                }
            }
        }
        stats
    }

    /// Runs the sampler at dimension `k`. The caller's generator only
    /// supplies a base seed; all other randomness comes from per-step and
    /// per-particle streams.
    pub fn run<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<ParticleSystem> {
        let base: u64 = rng.random();
        self.run_seeded(k, base)
    }

    pub fn run_seeded(&self, k: usize, base: u64) -> Result<ParticleSystem> {
        run_target(
            self,
            k,
            base,
            &RunShape {
                particles: self.config.particles,
                steps: self.config.schedule.steps(),
                resampling: self.config.resampling,
                record_history: self.config.record_history,
            },
        )
    }
}

impl SmcTarget for SmcSampler<'_> {
    type Particle = Particle;

    fn initial(&self, k: usize, rng: &mut StreamRng) -> Result<Particle> {
        Ok(self.particle(self.prior.sample(k, self.data.n_sites(), rng)?))
    }

    fn log_incremental_weight(&self, particle: &Particle, t: usize) -> f64 {
        let temps = self.config.schedule.temperatures();
        tempered(temps[t] - temps[t - 1], particle.log_likelihood)
    }

    fn mutate(&self, particle: &mut Particle, t: usize, rng: &mut StreamRng) -> MoveStats {
        let kappa = self.config.schedule.temperatures()[t];
        (0..self.config.kernel_sweeps)
            .map(|_| self.sweep(particle, kappa, rng))
            .fold(MoveStats::default(), MoveStats::merge)
    }
}

/// A sequence of bridging targets `xi_0, ..., xi_T` at fixed `k`.
///
/// `xi_0` must be the prior, so that `W_0 = 1`. Particles carry whatever
/// cached quantities the weights need.
pub trait SmcTarget: Sync {
    type Particle: Clone + Send + Sync + AsRef<ChangePointState>;

    /// A draw from `xi_0`.
    fn initial(&self, k: usize, rng: &mut StreamRng) -> Result<Self::Particle>;

    /// `log(xi_t / xi_{t-1})` at a particle that targets `xi_{t-1}`.
    fn log_incremental_weight(&self, particle: &Self::Particle, t: usize) -> f64;

    /// An MCMC move invariant for `xi_t`.
    fn mutate(&self, particle: &mut Self::Particle, t: usize, rng: &mut StreamRng) -> MoveStats;
}

/// Population size and bookkeeping options of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunShape {
    pub particles: usize,
    pub steps: usize,
    pub resampling: Resampling,
    pub record_history: bool,
}

/// Runs the generic sampler: prior draws, then for `t = 1..=T` resample by
/// `W_{t-1}`, weight each resampled particle before moving it, and move.
pub fn run_target<S: SmcTarget>(target: &S, k: usize, base: u64, shape: &RunShape) -> Result<ParticleSystem<S::Particle>> {
    let n_particles = shape.particles;
    if n_particles == 0 {
        return Err(Error::Config("at least one particle is required".into()));
    }
    let mut particles: Vec<S::Particle> = (0..n_particles)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(base, &[tag::INIT, i as u64]);
            target.initial(k, &mut r)
        })
        .collect::<Result<_>>()?;

    let snapshot = |ps: &[S::Particle]| ps.iter().map(|p| p.as_ref().clone()).collect::<Vec<_>>();
    let mut history = shape.record_history.then(|| vec![snapshot(&particles)]);
    let mut log_weights = vec![vec![0.0; n_particles]];
    let mut log_evidence_terms = vec![0.0];
    let mut ancestors = Vec::with_capacity(shape.steps);
    let mut moves = MoveStats::default();

    for t in 1..=shape.steps {
        let mut r = rng::stream(base, &[tag::RESAMPLE, t as u64]);
        let parents = resample(&log_weights[t - 1], n_particles, shape.resampling, &mut r)
            .ok_or(Error::Degenerate { step: t - 1 })?;

        let moved: Vec<(S::Particle, f64, MoveStats)> = parents
            .par_iter()
            .enumerate()
            .map(|(i, &a)| {
                let mut particle = particles[a].clone();
                let log_w = target.log_incremental_weight(&particle, t);
                let mut r = rng::stream(base, &[tag::MOVE, t as u64, i as u64]);
                let stats = target.mutate(&mut particle, t, &mut r);
                (particle, log_w, stats)
            })
            .collect();

        let mut weights = Vec::with_capacity(n_particles);
        particles = Vec::with_capacity(n_particles);
        for (p, w, s) in moved {
            particles.push(p);
            weights.push(w);
            moves = moves.merge(s);
        }
        let term = log_mean_exp(&weights);
        if term == f64::NEG_INFINITY {
            return Err(Error::Degenerate { step: t });
        }
        if let Some(h) = history.as_mut() {
            h.push(snapshot(&particles));
        }
        log_evidence_terms.push(term);
        log_weights.push(weights);
        ancestors.push(parents);
    }

    Ok(ParticleSystem {
        k,
        particles,
        log_weights,
        ancestors,
        log_evidence_terms,
        history,
        moves,
    })
}

/// Draws a final particle with probability proportional to `W_T`.
pub fn select_particle<'s, P: AsRef<ChangePointState>, R: Rng + ?Sized>(
    system: &'s ParticleSystem<P>,
    rng: &mut R,
) -> Result<(usize, &'s ChangePointState)> {
    system.select_particle(rng)
}

/// Convenience for callers that hold a seed rather than a generator.
pub fn seeded(seed: u64) -> StreamRng {
    rng::stream(seed, &[])
}
