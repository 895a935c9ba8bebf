//! Run configuration documents and the shipped presets.
//!
//! A run is described by one JSON document. Everything except the prior
//! has a default, so a preset only states what differs from them.

use serde::{Deserialize, Serialize};

use crate::abc::{default_tolerances, geometric_tolerances, AbcConfig, PmmhAbcConfig, ToniConfig};
use crate::changepoint::{ChangePointState, PriorSpec, ProposalSpec};
use crate::error::{Error, Result};
use crate::pmmh::PmmhConfig;
use crate::simulate::SimulationSpec;
use crate::smc::Resampling;
use crate::tree::Tree;

/// Inference algorithm selected by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// PMMH over `k` with SMC evidence estimates.
    #[default]
    Pmmh,
    /// PMMH over `k` with ABC-SMC evidence estimates.
    PmmhAbc,
    /// Population ABC-SMC over `(k, state)`.
    AbcSmc,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pmmh => "pmmh",
            Method::PmmhAbc => "pmmh-abc",
            Method::AbcSmc => "abc-smc",
        }
    }
}

/// True parameters of a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default)]
    pub changepoints: Vec<usize>,
    pub rates: Vec<f64>,
    pub n_sites: usize,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn state(&self) -> Result<ChangePointState> {
        let state = ChangePointState::new(self.changepoints.clone(), self.rates.clone())?;
        if !state.fits(self.n_sites) {
            return Err(Error::Config(format!(
                "change-points {:?} do not fit {} sites",
                self.changepoints, self.n_sites
            )));
        }
        Ok(state)
    }

    pub fn spec(&self, tree: Tree) -> Result<SimulationSpec> {
        Ok(SimulationSpec {
            tree,
            state: self.state()?,
            n_sites: self.n_sites,
            seed: self.seed,
        })
    }
}

/// ABC tolerance schedule; unset ends default to `nm` and `nm / 3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default = "default_tolerance_steps")]
    pub steps: usize,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub end: Option<f64>,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            steps: default_tolerance_steps(),
            start: None,
            end: None,
        }
    }
}

impl ToleranceConfig {
    pub fn schedule(&self, n: usize, m: usize) -> Result<Vec<f64>> {
        match (self.start, self.end) {
            (None, None) => default_tolerances(n, m, self.steps),
            (start, end) => {
                let nm = (n * m) as f64;
                geometric_tolerances(start.unwrap_or(nm), end.unwrap_or(nm / 3.0), self.steps)
            }
        }
    }
}

/// Settings shared by the ABC estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbcSettings {
    #[serde(default = "default_twenty")]
    pub pseudo_datasets: usize,
    #[serde(default = "default_twenty")]
    pub particles: usize,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    /// Population size of ABC-SMC model selection.
    #[serde(default = "default_population")]
    pub population: usize,
    #[serde(default = "default_one")]
    pub replicates: usize,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

impl Default for AbcSettings {
    fn default() -> Self {
        Self {
            pseudo_datasets: default_twenty(),
            particles: default_twenty(),
            tolerances: ToleranceConfig::default(),
            population: default_population(),
            replicates: default_one(),
            max_attempts: default_attempts(),
        }
    }
}

/// Settings of `infer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    #[serde(default)]
    pub method: Method,
    /// Time-machine cut-off `g`.
    #[serde(default = "default_one")]
    pub cutoff: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub time_budget: Option<f64>,
    #[serde(default = "default_twenty")]
    pub particles: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    #[serde(default = "default_one")]
    pub kernel_sweeps: usize,
    #[serde(default)]
    pub resampling: Resampling,
    #[serde(default = "default_retries")]
    pub init_retries: usize,
    /// Records dropped before summarizing.
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default)]
    pub abc: AbcSettings,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            method: Method::default(),
            cutoff: 1,
            iterations: default_iterations(),
            time_budget: None,
            particles: default_twenty(),
            steps: default_steps(),
            exponent: default_exponent(),
            kernel_sweeps: 1,
            resampling: Resampling::default(),
            init_retries: default_retries(),
            burn_in: 0,
            abc: AbcSettings::default(),
        }
    }
}

/// Settings of `bench`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "default_bench_cutoffs")]
    pub cutoffs: Vec<usize>,
    #[serde(default = "default_bench_replicates")]
    pub replicates: usize,
    /// Models to estimate; empty means the prior's support.
    #[serde(default)]
    pub models: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            cutoffs: default_bench_cutoffs(),
            replicates: default_bench_replicates(),
            models: Vec::new(),
        }
    }
}

/// One run document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// Newick tree used when no tree file is given.
    #[serde(default)]
    pub tree: Option<String>,
    /// Dataset simulated when no data file is given.
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    pub prior: PriorSpec,
    #[serde(default)]
    pub proposal: ProposalSpec,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.proposal.validate()?;
        let inf = &self.inference;
        if inf.cutoff == 0 {
            return Err(Error::Config("cut-off g must be at least 1".into()));
        }
        if inf.iterations == 0 {
            return Err(Error::Config("at least one iteration is required".into()));
        }
        if let Some(t) = inf.time_budget {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("time budget {t} must be positive")));
            }
        }
        if inf.abc.tolerances.steps == 0 {
            return Err(Error::Config("ABC needs at least one tolerance".into()));
        }
        if self.bench.replicates == 0 || self.bench.cutoffs.contains(&0) {
            return Err(Error::Config("bench needs replicates and cut-offs >= 1".into()));
        }
        if let Some(tree) = &self.tree {
            let tree = Tree::parse_newick(tree)?;
            tree.kept_nodes(inf.cutoff)?;
        }
        if let Some(sim) = &self.simulation {
            sim.state()?;
        }
        self.pmmh().validate()
    }

    pub fn pmmh(&self) -> PmmhConfig {
        let inf = &self.inference;
        PmmhConfig {
            iterations: inf.iterations,
            time_budget: inf.time_budget,
            particles: inf.particles,
            steps: inf.steps,
            exponent: inf.exponent,
            kernel_sweeps: inf.kernel_sweeps,
            proposal: self.proposal.clone(),
            prior: self.prior.clone(),
            cutoff: inf.cutoff,
            seed: self.seed,
            init_retries: inf.init_retries,
        }
    }

    pub fn abc(&self, n: usize, m: usize) -> Result<AbcConfig> {
        let s = &self.inference.abc;
        let config = AbcConfig {
            pseudo_datasets: s.pseudo_datasets,
            particles: s.particles,
            tolerances: s.tolerances.schedule(n, m)?,
            proposal: self.proposal.clone(),
            kernel_sweeps: self.inference.kernel_sweeps,
            resampling: self.inference.resampling,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn pmmh_abc(&self, n: usize, m: usize) -> Result<PmmhAbcConfig> {
        Ok(PmmhAbcConfig {
            iterations: self.inference.iterations,
            time_budget: self.inference.time_budget,
            prior: self.prior.clone(),
            abc: self.abc(n, m)?,
            seed: self.seed,
            init_retries: self.inference.init_retries,
        })
    }

    pub fn toni(&self, n: usize, m: usize) -> Result<ToniConfig> {
        let s = &self.inference.abc;
        let config = ToniConfig {
            particles: s.population,
            tolerances: s.tolerances.schedule(n, m)?,
            proposal: self.proposal.clone(),
            replicates: s.replicates,
            max_attempts: s.max_attempts,
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn bench_models(&self) -> Vec<usize> {
        if self.bench.models.is_empty() {
            self.prior.k_support.clone()
        } else {
            self.bench.models.clone()
        }
    }
}

fn default_one() -> usize {
    1
}

fn default_twenty() -> usize {
    20
}

fn default_steps() -> usize {
    10
}

fn default_exponent() -> f64 {
    2.0
}

fn default_iterations() -> usize {
    1000
}

fn default_retries() -> usize {
    10
}

fn default_tolerance_steps() -> usize {
    10
}

fn default_population() -> usize {
    1000
}

fn default_attempts() -> usize {
    1000
}

fn default_bench_cutoffs() -> Vec<usize> {
    vec![1, 4]
}

fn default_bench_replicates() -> usize {
    50
}

/// Named run documents shipped with the crate.
pub mod presets {
    use super::RunConfig;
    use crate::error::{Error, Result};

    const PRESETS: [(&str, &str); 5] = [
        ("base-dataset", include_str!("../presets/base-dataset.json")),
        ("two-changepoints", include_str!("../presets/two-changepoints.json")),
        ("subtle-changepoint", include_str!("../presets/subtle-changepoint.json")),
        ("more-sites", include_str!("../presets/more-sites.json")),
        ("act1-workflow", include_str!("../presets/act1-workflow.json")),
    ];

    pub fn names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(name, _)| *name)
    }

    pub fn source(name: &str) -> Option<&'static str> {
        PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
    }

    pub fn get(name: &str) -> Result<RunConfig> {
        let text = source(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown preset {name:?}; expected one of {}",
                names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        RunConfig::from_json(text)
    }
}
