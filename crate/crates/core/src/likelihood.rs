//! Observed-data log-likelihoods by pruning (belief propagation), exact or
//! with the top of the tree removed.
//!
//! With cut-off `g = 1` the whole tree is used and the root state follows
//! the stationary law. With `2 <= g <= n` the nodes `2n-g+1..=2n-1` are
//! removed; every removed node that is the parent of a kept node (a
//! boundary node) gets an independent stationary state, shared by all of
//! its kept children.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::changepoint::ChangePointState;
use crate::error::{domain, Error, Result};
use crate::sequence::SequenceData;
use crate::subst_model::{JukesCantor, SubstitutionModel, TransitionMatrix, N_STATES};
use crate::tree::Tree;

/// Sites per reduction chunk. Totals are always summed chunk by chunk in
/// site order, so the result does not depend on how chunks are scheduled.
const CHUNK: usize = 256;
/// Below this many sites the chunks are evaluated on the calling thread.
const PARALLEL_SITES: usize = 4 * CHUNK;

#[derive(Debug, Clone)]
struct PlanNode {
    id: usize,
    /// Kept children whose messages are multiplied into this node.
    children: Vec<usize>,
}

/// Pruning engine for a fixed tree and cut-off.
#[derive(Debug, Clone)]
pub struct LikelihoodEngine {
    tree: Tree,
    cutoff: usize,
    kept: usize,
    boundary: Vec<usize>,
    plan: Vec<PlanNode>,
    tops: Vec<usize>,
}

impl LikelihoodEngine {
    /// `cutoff = 1` is the exact model; `2..=n` engages the time machine.
    pub fn new(tree: Tree, cutoff: usize) -> Result<Self> {
        let kept = tree.kept_nodes(cutoff)?;
        let boundary = tree.boundary_nodes(cutoff)?;
        let n = tree.n_leaves();

        let mut plan = Vec::new();
        for id in n + 1..=tree.n_nodes() {
            let kids = tree.children(id).expect("internal node");
            let kept_kids: Vec<usize> = kids.into_iter().filter(|&c| c <= kept).collect();
            if id <= kept {
                debug_assert_eq!(kept_kids.len(), 2);
            } else if kept_kids.is_empty() {
                continue;
            }
            plan.push(PlanNode {
                id,
                children: kept_kids,
            });
        }
        // Every kept node's parent is either kept or a boundary node.
        for id in 1..=kept.min(tree.n_nodes() - 1) {
            let p = tree.parent(id).expect("non-root");
            if p > kept && boundary.binary_search(&p).is_err() {
                return Err(domain(format!(
                    "kept node {id} has removed parent {p} outside the boundary set"
                )));
            }
        }
        let tops = if cutoff == 1 {
            vec![tree.root()]
        } else {
            boundary.clone()
        };
        Ok(Self {
            tree,
            cutoff,
            kept,
            boundary,
            plan,
            tops,
        })
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn check_data(&self, data: &SequenceData) -> Result<()> {
        if data.n_sequences() != self.tree.n_leaves() {
            return Err(Error::Data(format!(
                "tree has {} leaves but data has {} sequences",
                self.tree.n_leaves(),
                data.n_sequences()
            )));
        }
        Ok(())
    }

    /// Transition matrices for every kept node's parent branch.
    fn branch_matrices<M: SubstitutionModel>(&self, model: &M) -> Vec<TransitionMatrix> {
        (1..=self.kept.min(self.tree.n_nodes() - 1))
            .map(|id| model.transition_matrix(self.tree.branch_length(id)))
            .collect()
    }

    fn site_with(
        &self,
        matrices: &[TransitionMatrix],
        stationary: &[f64; N_STATES],
        column: &[u8],
        partials: &mut [[f64; N_STATES]],
    ) -> f64 {
        let n = self.tree.n_leaves();
        let mut log_scale = 0.0;
        for node in &self.plan {
            let mut acc = [1.0; N_STATES];
            for &c in &node.children {
                let p = &matrices[c - 1];
                if c <= n {
                    let x = column[c - 1] as usize;
                    for (a, v) in acc.iter_mut().enumerate() {
                        *v *= p[a][x];
                    }
                } else {
                    let child = &partials[c - 1];
                    for (a, v) in acc.iter_mut().enumerate() {
                        let msg: f64 = p[a].iter().zip(child).map(|(q, l)| q * l).sum();
                        *v *= msg;
                    }
                }
            }
            let max = acc.iter().copied().fold(0.0, f64::max);
            if max <= 0.0 {
                return f64::NEG_INFINITY;
            }
            for v in acc.iter_mut() {
                *v /= max;
            }
            log_scale += max.ln();
            partials[node.id - 1] = acc;
        }
        let mut total = log_scale;
        for &top in &self.tops {
            let l = &partials[top - 1];
            let mass: f64 = stationary.iter().zip(l).map(|(p, v)| p * v).sum();
            total += mass.ln();
        }
        total
    }

    fn workspace(&self) -> Vec<[f64; N_STATES]> {
        vec![[0.0; N_STATES]; self.tree.n_nodes()]
    }

    /// Log-probability of one column under `model`.
    pub fn site_log_likelihood_with<M: SubstitutionModel>(&self, model: &M, column: &[u8]) -> f64 {
        let matrices = self.branch_matrices(model);
        self.site_with(&matrices, &model.stationary(), column, &mut self.workspace())
    }

    /// Log-probability of one column under Jukes-Cantor with total rate `rate`.
    pub fn site_log_likelihood(&self, rate: f64, column: &[u8]) -> Result<f64> {
        let model = JukesCantor::new(rate)?;
        Ok(self.site_log_likelihood_with(&model, column))
    }

    /// Per-site log-likelihoods at a single rate, in site order.
    pub fn site_log_likelihoods(&self, rate: f64, data: &SequenceData) -> Result<Vec<f64>> {
        self.check_data(data)?;
        let model = JukesCantor::new(rate)?;
        let matrices = self.branch_matrices(&model);
        let stationary = model.stationary();
        let mut ws = self.workspace();
        Ok((0..data.n_sites())
            .map(|s| self.site_with(&matrices, &stationary, data.column(s), &mut ws))
            .collect())
    }

    /// Log-likelihood of the change-point model: each segment's sites are
    /// evaluated at that segment's rate. Uses the engine's cut-off, so this
    /// is exact for `g = 1` and the time-machine approximation otherwise.
    pub fn segmented_log_likelihood(&self, state: &ChangePointState, data: &SequenceData) -> f64 {
        let m = data.n_sites();
        debug_assert_eq!(data.n_sequences(), self.tree.n_leaves());
        debug_assert!(state.fits(m));
        let segments: Vec<(std::ops::Range<usize>, Vec<TransitionMatrix>, [f64; N_STATES])> =
            state
                .segments(m)
                .map(|(range, rate)| {
                    let model = JukesCantor::new(rate).expect("validated rate");
                    (range, self.branch_matrices(&model), model.stationary())
                })
                .collect();

        let chunk_total = |chunk: usize| -> f64 {
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(m);
            let mut ws = self.workspace();
            let mut seg = segments
                .iter()
                .position(|(r, _, _)| r.contains(&lo))
                .unwrap_or(0);
            let mut total = 0.0;
            for site in lo..hi {
                while !segments[seg].0.contains(&site) {
                    seg += 1;
                }
                let (_, matrices, stationary) = &segments[seg];
                total += self.site_with(matrices, stationary, data.column(site), &mut ws);
            }
            total
        };

        let n_chunks = m.div_ceil(CHUNK);
        let totals: Vec<f64> = if m >= PARALLEL_SITES {
            (0..n_chunks).into_par_iter().map(chunk_total).collect()
        } else {
            (0..n_chunks).map(chunk_total).collect()
        };
        totals.into_iter().sum()
    }

    /// The truncated likelihood; requires an engine built with `g >= 2`.
    pub fn time_machine_log_likelihood(
        &self,
        state: &ChangePointState,
        data: &SequenceData,
    ) -> Result<f64> {
        if self.cutoff < 2 {
            return Err(domain(format!(
                "time machine needs 2 <= g <= {}, engine has g = {}",
                self.tree.n_leaves(),
                self.cutoff
            )));
        }
        Ok(self.segmented_log_likelihood(state, data))
    }
}

/// Wall time of `repeats` single-rate likelihood evaluations of `data`.
pub fn complexity_probe(
    engine: &LikelihoodEngine,
    data: &SequenceData,
    rate: f64,
    repeats: usize,
) -> Result<Duration> {
    engine.check_data(data)?;
    let state = ChangePointState::constant(rate)?;
    let start = Instant::now();
    let mut sink = 0.0;
    for _ in 0..repeats {
        sink += engine.segmented_log_likelihood(&state, data);
    }
    std::hint::black_box(sink);
    Ok(start.elapsed())
}
