//! Shared fixtures for the benchmarks: the eight-taxon balanced tree and
//! datasets simulated on it.

use phylocp_core::{simulate_dataset, ChangePointState, SequenceData, SimulationSpec, Tree};

pub const BASE_TREE: &str = "(((Taxon0:1.0,Taxon1:1.0):1.0,(Taxon2:1.0,Taxon3:1.0):1.0):1.0,((Taxon4:1.0,Taxon5:1.0):1.0,(Taxon6:1.0,Taxon7:1.0):1.0):1.0):1.0;";

pub fn base_tree() -> Tree {
    Tree::parse_newick(BASE_TREE).expect("fixture tree parses")
}

/// `m` sites with one change-point in the middle.
pub fn dataset(m: usize, seed: u64) -> SequenceData {
    let state = ChangePointState::new(vec![m / 2], vec![0.75, 0.85]).expect("valid state");
    simulate_dataset(&SimulationSpec {
        tree: base_tree(),
        state,
        n_sites: m,
        seed,
    })
    .expect("simulation succeeds")
}
