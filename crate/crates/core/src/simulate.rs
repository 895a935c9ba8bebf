//! Forward simulation of the change-point model down a tree.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::changepoint::ChangePointState;
use crate::error::{domain, Result};
use crate::rng::{self, tag, StreamRng};
use crate::sequence::SequenceData;
use crate::subst_model::{JukesCantor, SubstitutionModel, TransitionMatrix, N_STATES};
use crate::tree::Tree;

const PARALLEL_SITES: usize = 2048;

/// True parameters and seed of a simulated dataset.
#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub tree: Tree,
    pub state: ChangePointState,
    pub n_sites: usize,
    pub seed: u64,
}

/// Leaf data plus, per site, the states of every node `1..=2n-1`.
#[derive(Debug, Clone)]
pub struct FullSimulation {
    pub data: SequenceData,
    /// Site-major, `2n - 1` entries per site, indexed by `id - 1`.
    pub node_states: Vec<u8>,
}

impl FullSimulation {
    pub fn node_state(&self, n_nodes: usize, site: usize, id: usize) -> u8 {
        self.node_states[site * n_nodes + id - 1]
    }
}

pub fn simulate_dataset(spec: &SimulationSpec) -> Result<SequenceData> {
    Ok(simulate_full(spec)?.data)
}

pub fn simulate_full(spec: &SimulationSpec) -> Result<FullSimulation> {
    let mut rng = StreamRng::seed_from_u64(spec.seed);
    simulate_with_internal(&spec.tree, &spec.state, spec.n_sites, &mut rng)
}

/// Draws a dataset from `rng`; the same seed reproduces `simulate_dataset`.
pub fn simulate_pseudo_data<R: Rng + ?Sized>(
    tree: &Tree,
    state: &ChangePointState,
    n_sites: usize,
    rng: &mut R,
) -> Result<SequenceData> {
    Ok(simulate_with_internal(tree, state, n_sites, rng)?.data)
}

/// Cumulative rows for inverse-CDF sampling.
fn cumulative(p: &TransitionMatrix) -> TransitionMatrix {
    let mut c = *p;
    for row in c.iter_mut() {
        for b in 1..N_STATES {
            row[b] += row[b - 1];
        }
    }
    c
}

fn draw(cdf: &[f64; N_STATES], u: f64) -> u8 {
    cdf.iter().position(|&c| u < c).unwrap_or(N_STATES - 1) as u8
}

fn simulate_with_internal<R: Rng + ?Sized>(
    tree: &Tree,
    state: &ChangePointState,
    n_sites: usize,
    rng: &mut R,
) -> Result<FullSimulation> {
    if !state.fits(n_sites) {
        return Err(domain(format!(
            "change-points {:?} do not fit {n_sites} sites",
            state.changepoints()
        )));
    }
    let base: u64 = rng.random();
    let n = tree.n_leaves();
    let n_nodes = tree.n_nodes();

    struct Segment {
        range: std::ops::Range<usize>,
        root_cdf: [f64; N_STATES],
        branch_cdfs: Vec<TransitionMatrix>,
    }
    let segments: Vec<Segment> = state
        .segments(n_sites)
        .map(|(range, rate)| {
            let model = JukesCantor::new(rate)?;
            let mut root_cdf = model.stationary();
            for b in 1..N_STATES {
                root_cdf[b] += root_cdf[b - 1];
            }
            let branch_cdfs = (1..n_nodes)
                .map(|id| cumulative(&model.transition_matrix(tree.branch_length(id))))
                .collect();
            Ok(Segment {
                range,
                root_cdf,
                branch_cdfs,
            })
        })
        .collect::<Result<_>>()?;

    let simulate_site = |site: usize, out: &mut [u8]| {
        let seg = segments
            .iter()
            .find(|s| s.range.contains(&site))
            .expect("segments cover all sites");
        let mut r = rng::stream(base, &[tag::SITE, site as u64]);
        out[n_nodes - 1] = draw(&seg.root_cdf, r.random());
        for id in (1..n_nodes).rev() {
            let parent = tree.parent(id).expect("non-root") - 1;
            let row = &seg.branch_cdfs[id - 1][out[parent] as usize];
            out[id - 1] = draw(row, r.random());
        }
    };

    let mut node_states = vec![0u8; n_sites * n_nodes];
    if n_sites >= PARALLEL_SITES {
        node_states
            .par_chunks_mut(n_nodes)
            .enumerate()
            .for_each(|(site, out)| simulate_site(site, out));
    } else {
        node_states
            .chunks_mut(n_nodes)
            .enumerate()
            .for_each(|(site, out)| simulate_site(site, out));
    }

    let mut cells = Vec::with_capacity(n_sites * n);
    for site in 0..n_sites {
        cells.extend_from_slice(&node_states[site * n_nodes..site * n_nodes + n]);
    }
    let data = SequenceData::from_columns(tree.leaf_names().to_vec(), n_sites, cells);
    Ok(FullSimulation { data, node_states })
}
