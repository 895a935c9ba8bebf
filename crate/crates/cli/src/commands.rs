use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use phylocp_core::abc::{run_abc_smc_model_selection, run_pmmh_abc_with, ToniResult};
use phylocp_core::chain_io::{read_chain, ChainHeader, ChainWriter};
use phylocp_core::diagnostics::{plot_data, summarize_chain, ChainSummary};
use phylocp_core::pmmh::{run_pmmh_with, RunSummary};
use phylocp_core::rng::derive_seed;
use phylocp_core::{
    presets, simulate_dataset, LeafMapping, LikelihoodEngine, Method, RunConfig, SequenceData, SmcSampler, Tree,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::{BenchArgs, ConfigArgs, DataArgs, DiagnoseArgs, InferArgs, PresetsArgs, SimulateArgs};
use crate::failure::{Failure, Outcome};

fn read_text(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let text = serde_json::to_string_pretty(value).expect("outputs serialize");
    write_text(path, &(text + "\n"))
}

fn out_dir(dir: &Path) -> Outcome<&Path> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    Ok(dir)
}

/// SHA-256 of the compact JSON of the effective run document.
pub fn config_hash(config: &RunConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Loads the run document and applies the shared overrides.
fn load_config(args: &ConfigArgs) -> Outcome<RunConfig> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), _) => {
            RunConfig::from_json(&read_text(path)?).map_err(|e| Failure::from(e).context(path.display()))?
        }
        (None, Some(name)) => presets::get(name)?,
        (None, None) => {
            return Err(Failure::Validation("one of --config or --preset is required".into()));
        }
    };
    if let Some(path) = &args.tree {
        let text = read_text(path)?;
        Tree::parse_newick(&text).map_err(|e| Failure::from(e).context(path.display()))?;
        config.tree = Some(text.trim().to_string());
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn tree_of(config: &RunConfig) -> Outcome<Tree> {
    let text = config
        .tree
        .as_deref()
        .ok_or_else(|| Failure::Validation("no tree: pass --tree or set \"tree\" in the config".into()))?;
    Ok(Tree::parse_newick(text)?)
}

/// Observed data: the FASTA file if given, else the configured simulation.
fn load_data(config: &RunConfig, tree: &Tree, args: &DataArgs) -> Outcome<(SequenceData, String)> {
    match &args.data {
        Some(path) => {
            let text = read_text(path)?;
            let mapping = if args.map_by_name {
                LeafMapping::ByName
            } else {
                LeafMapping::ByPosition
            };
            let data = SequenceData::parse_fasta(&text)
                .and_then(|d| d.align_to_tree(tree, mapping))
                .map_err(|e| Failure::from(e).context(path.display()))?;
            Ok((data, path.display().to_string()))
        }
        None => {
            let sim = config.simulation.as_ref().ok_or_else(|| {
                Failure::Validation("no data: pass --data or set \"simulation\" in the config".into())
            })?;
            let data = simulate_dataset(&sim.spec(tree.clone())?)?;
            Ok((data, format!("simulated (seed {})", sim.seed)))
        }
    }
}

fn data_hash(data: &SequenceData) -> String {
    hex::encode(Sha256::digest(data.to_fasta().as_bytes()))
}

#[derive(Serialize)]
struct Truth {
    config_hash: String,
    seed: u64,
    k: usize,
    s: Vec<usize>,
    theta: Vec<f64>,
    n_sites: usize,
}

pub fn simulate(args: &SimulateArgs) -> Outcome {
    let mut config = load_config(&args.config)?;
    let tree = tree_of(&config)?;
    let sim = config
        .simulation
        .as_mut()
        .ok_or_else(|| Failure::Validation("the config has no \"simulation\" section".into()))?;
    if let Some(seed) = args.config.seed {
        sim.seed = seed;
    }
    if let Some(m) = args.sites {
        sim.n_sites = m;
    }
    let spec = sim.spec(tree.clone())?;
    let hash = config_hash(&config);
    let data = simulate_dataset(&spec)?;
    let dir = out_dir(&args.out)?;
    write_text(&dir.join("sequences.fasta"), &data.to_fasta())?;
    write_text(&dir.join("tree.nwk"), &(tree.to_newick() + "\n"))?;
    write_json(
        &dir.join("truth.json"),
        &Truth {
            config_hash: hash,
            seed: spec.seed,
            k: spec.state.k(),
            s: spec.state.changepoints().to_vec(),
            theta: spec.state.rates().to_vec(),
            n_sites: spec.n_sites,
        },
    )?;
    eprintln!("wrote {} sequences of {} sites to {}", data.n_sequences(), data.n_sites(), dir.display());
    Ok(())
}

/// Everything `infer` reports besides the chain itself.
#[derive(Debug, Serialize, Deserialize)]
pub struct InferSummary {
    pub config_hash: String,
    pub seed: u64,
    pub method: Method,
    pub cutoff: usize,
    pub data: String,
    pub data_sha256: String,
    pub n_sequences: usize,
    pub n_sites: usize,
    #[serde(default)]
    pub run: Option<RunSummary>,
    #[serde(default)]
    pub chain: Option<ChainSummary>,
    #[serde(default)]
    pub abc_smc: Option<ToniResult>,
    pub config: RunConfig,
}

pub fn infer(args: &InferArgs) -> Outcome {
    let mut config = load_config(&args.config)?;
    let inf = &mut config.inference;
    if let Some(m) = args.method {
        inf.method = m.into();
    }
    if let Some(g) = args.g {
        inf.cutoff = g;
    }
    match (args.iterations, args.time_budget) {
        (Some(n), t) => {
            inf.iterations = n;
            inf.time_budget = t;
        }
        (None, Some(t)) => {
            inf.iterations = usize::MAX;
            inf.time_budget = Some(t);
        }
        (None, None) => {}
    }
    if let Some(b) = args.burn_in {
        inf.burn_in = b;
    }
    config.validate()?;
    let tree = tree_of(&config)?;
    tree.kept_nodes(config.inference.cutoff)?;
    let (data, source) = load_data(&config, &tree, &args.data)?;
    let hash = config_hash(&config);
    let header = ChainHeader {
        config_hash: hash.clone(),
        seed: config.seed,
    };
    let dir = out_dir(&args.out)?;
    let (n, m) = (data.n_sequences(), data.n_sites());
    let mut summary = InferSummary {
        config_hash: hash,
        seed: config.seed,
        method: config.inference.method,
        cutoff: config.inference.cutoff,
        data: source,
        data_sha256: data_hash(&data),
        n_sequences: n,
        n_sites: m,
        run: None,
        chain: None,
        abc_smc: None,
        config: config.clone(),
    };

    match config.inference.method {
        Method::Pmmh | Method::PmmhAbc => {
            let path = dir.join("chain.csv");
            let mut writer = ChainWriter::new(create(&path)?, &header)?;
            let observer = |r: &_| writer.write(r);
            let run = match config.inference.method {
                Method::Pmmh => run_pmmh_with(&config.pmmh(), &data, &tree, observer),
                _ => run_pmmh_abc_with(&config.pmmh_abc(n, m)?, &data, &tree, observer),
            }?;
            let mut burn_in = config.inference.burn_in;
            if burn_in >= run.records.len() {
                eprintln!(
                    "burn-in {burn_in} exceeds the {} records; summarizing the whole chain",
                    run.records.len()
                );
                burn_in = 0;
            }
            summary.chain = Some(summarize_chain(&run.records, burn_in, &config.prior.k_support)?);
            summary.run = Some(run.summary);
        }
        Method::AbcSmc => {
            let result = run_abc_smc_model_selection(&config.toni(n, m)?, &config.prior, &data, &tree)?;
            write_population(&dir.join("population.csv"), &header, &result)?;
            summary.abc_smc = Some(result);
        }
    }
    write_json(&dir.join("summary.json"), &summary)?;
    report_probs(&summary);
    Ok(())
}

fn report_probs(summary: &InferSummary) {
    let probs = summary
        .chain
        .as_ref()
        .map(|c| &c.model_probs)
        .or(summary.abc_smc.as_ref().map(|r| &r.model_probs));
    if let Some(probs) = probs {
        for (k, p) in probs {
            eprintln!("P(k={k} | data) = {p:.4}");
        }
    }
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

fn write_population(path: &Path, header: &ChainHeader, result: &ToniResult) -> Outcome {
    let mut out = create(path)?;
    writeln!(out, "{}", header.to_line()).map_err(|e| Failure::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "s", "theta", "weight"])?;
    for p in &result.population {
        w.write_record([
            p.state.k().to_string(),
            join(p.state.changepoints()),
            join(p.state.rates()),
            format!("{:?}", p.weight),
        ])?;
    }
    w.flush().map_err(|e| Failure::io(path, e))
}

#[derive(Serialize)]
struct Diagnostics {
    config_hash: Option<String>,
    seed: Option<u64>,
    chain: String,
    summary: ChainSummary,
}

pub fn diagnose(args: &DiagnoseArgs) -> Outcome {
    let file = File::open(&args.chain).map_err(|e| Failure::io(&args.chain, e))?;
    let (header, records) = read_chain(file).map_err(|e| Failure::from(e).context(args.chain.display()))?;
    if records.is_empty() {
        return Err(Failure::Validation(format!("{} has no records", args.chain.display())));
    }

    let summary_path = args
        .summary
        .clone()
        .unwrap_or_else(|| args.chain.with_file_name("summary.json"));
    let run_summary: Option<InferSummary> = match (summary_path.exists(), &args.summary) {
        (true, _) => Some(
            serde_json::from_str(&read_text(&summary_path)?)
                .map_err(|e| Failure::Validation(format!("{}: {e}", summary_path.display())))?,
        ),
        (false, Some(p)) => return Err(Failure::io(p, "no such file")),
        (false, None) => None,
    };
    if let Some(s) = &run_summary {
        let chain_hash = header.as_ref().map(|h| h.config_hash.as_str());
        if chain_hash != Some(s.config_hash.as_str()) && !args.force {
            return Err(Failure::Validation(format!(
                "{} (config hash {}) does not belong to {} (config hash {}); pass --force to override",
                args.chain.display(),
                chain_hash.unwrap_or("missing"),
                summary_path.display(),
                s.config_hash
            )));
        }
    }

    let burn_in = args
        .burn_in
        .or_else(|| run_summary.as_ref().and_then(|s| s.chain.as_ref()).map(|c| c.burn_in))
        .unwrap_or(0);
    let requested: Vec<usize> = run_summary
        .as_ref()
        .map(|s| s.config.prior.k_support.clone())
        .unwrap_or_default();
    let summary = summarize_chain(&records, burn_in, &requested)?;
    let plots = plot_data(&records, burn_in, args.max_lag, args.grid_points)?;

    let dir = out_dir(&args.out)?;
    let provenance = header.as_ref().map(ChainHeader::to_line);
    write_json(
        &dir.join("diagnostics.json"),
        &Diagnostics {
            config_hash: header.as_ref().map(|h| h.config_hash.clone()),
            seed: header.as_ref().map(|h| h.seed),
            chain: args.chain.display().to_string(),
            summary,
        },
    )?;
    write_table(
        &dir.join("acf_k.csv"),
        provenance.as_deref(),
        &["lag", "acf"],
        plots.acf_k.iter().map(|(lag, v)| vec![lag.to_string(), v.map_or(String::new(), |v| format!("{v:?}"))]),
    )?;
    write_table(
        &dir.join("s1_histogram.csv"),
        provenance.as_deref(),
        &["k", "s1", "count"],
        plots
            .s1_histograms
            .iter()
            .flat_map(|(k, h)| h.iter().map(move |(s, c)| vec![k.to_string(), s.to_string(), c.to_string()])),
    )?;
    write_table(
        &dir.join("rate_density.csv"),
        provenance.as_deref(),
        &["k", "rate", "theta", "density"],
        plots.rate_densities.iter().flat_map(|(k, grids)| {
            grids.iter().enumerate().flat_map(move |(j, grid)| {
                grid.iter()
                    .map(move |(x, d)| vec![k.to_string(), (j + 1).to_string(), format!("{x:?}"), format!("{d:?}")])
            })
        }),
    )?;
    eprintln!("wrote diagnostics of {} records (burn-in {burn_in}) to {}", records.len(), dir.display());
    Ok(())
}

fn write_table<I>(path: &Path, provenance: Option<&str>, columns: &[&str], rows: I) -> Outcome
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut out = create(path)?;
    if let Some(line) = provenance {
        writeln!(out, "{line}").map_err(|e| Failure::io(path, e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Failure::io(path, e))
}

/// Spread of the evidence estimates for one cut-off and model.
#[derive(Debug, Serialize, Deserialize)]
pub struct BenchCell {
    pub g: usize,
    pub k: usize,
    pub replicates: usize,
    pub mean_log_evidence: f64,
    pub variance_log_evidence: Option<f64>,
    pub mean_seconds: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BenchSummary {
    pub config_hash: String,
    pub seed: u64,
    pub cells: Vec<BenchCell>,
}

pub fn bench(args: &BenchArgs) -> Outcome {
    let mut config = load_config(&args.config)?;
    if !args.g.is_empty() {
        config.bench.cutoffs = args.g.clone();
    }
    if !args.k.is_empty() {
        config.bench.models = args.k.clone();
    }
    if let Some(s) = args.replicates {
        config.bench.replicates = s;
    }
    config.validate()?;
    let tree = tree_of(&config)?;
    let (data, _) = load_data(&config, &tree, &args.data)?;
    let hash = config_hash(&config);
    let smc = config.pmmh().smc_config()?;
    let models = config.bench_models();
    for &k in &models {
        if !config.prior.k_support.contains(&k) {
            return Err(Failure::Validation(format!("model k = {k} is outside the prior support")));
        }
    }

    let dir = out_dir(&args.out)?;
    let path = dir.join("bench.csv");
    let mut out = create(&path)?;
    writeln!(out, "# config_hash={hash} seed={}", config.seed).map_err(|e| Failure::io(&path, e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["g", "k", "replicate", "log_evidence", "seconds"])?;
    let mut cells = Vec::new();
    for &g in &config.bench.cutoffs {
        let engine = LikelihoodEngine::new(tree.clone(), g)?;
        let sampler = SmcSampler::new(&engine, &data, &config.prior, &smc)?;
        for &k in &models {
            let mut values = Vec::with_capacity(config.bench.replicates);
            let mut seconds = 0.0;
            for r in 0..config.bench.replicates {
                let start = Instant::now();
                let system = sampler.run_seeded(k, derive_seed(config.seed, &[k as u64, r as u64]))?;
                let elapsed = start.elapsed().as_secs_f64();
                let z = system.log_evidence();
                w.write_record([g.to_string(), k.to_string(), r.to_string(), format!("{z:?}"), format!("{elapsed:?}")])?;
                values.push(z);
                seconds += elapsed;
            }
            let s = values.len() as f64;
            let mean = values.iter().sum::<f64>() / s;
            let variance = (values.len() > 1)
                .then(|| values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1.0));
            eprintln!("g={g} k={k}: mean log-evidence {mean:.4}, variance {variance:?}, {:.4}s per run", seconds / s);
            cells.push(BenchCell {
                g,
                k,
                replicates: values.len(),
                mean_log_evidence: mean,
                variance_log_evidence: variance,
                mean_seconds: seconds / s,
            });
        }
    }
    w.flush().map_err(|e| Failure::io(&path, e))?;
    write_json(
        &dir.join("bench_summary.json"),
        &BenchSummary {
            config_hash: hash,
            seed: config.seed,
            cells,
        },
    )
}

pub fn list_presets(args: &PresetsArgs) -> Outcome {
    match &args.name {
        Some(name) => {
            let text = presets::source(name)
                .ok_or_else(|| Failure::Validation(format!("unknown preset {name:?}")))?;
            print!("{text}");
        }
        None => {
            for name in presets::names() {
                println!("{name}");
            }
        }
    }
    Ok(())
}
