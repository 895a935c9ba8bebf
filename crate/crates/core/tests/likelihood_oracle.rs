mod common;

use common::{boundary, enumerate_site, enumerate_sites, random_data, random_newick};
use phylocp_core::{ChangePointState, LikelihoodEngine, Tree};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pruning_matches_enumeration(seed in any::<u64>(), n in 2usize..=5, m in 1usize..=10, theta in 0.05f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = Tree::parse_newick(&random_newick(n, &mut rng)).unwrap();
        let data = random_data(n, m, &mut rng);
        let engine = LikelihoodEngine::new(tree.clone(), 1).unwrap();
        let got = engine.site_log_likelihoods(theta, &data).unwrap();
        let want = enumerate_sites(&tree, 1, &data, theta);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!(rel_close(g.exp(), w.exp(), 1e-10), "{g} vs {w}");
        }
    }

    #[test]
    fn time_machine_matches_boundary_enumeration(seed in any::<u64>(), n in 2usize..=5, m in 1usize..=6, theta in 0.05f64..5.0, g_pick in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = Tree::parse_newick(&random_newick(n, &mut rng)).unwrap();
        let g = 1 + g_pick % n;
        let data = random_data(n, m, &mut rng);
        let engine = LikelihoodEngine::new(tree.clone(), g).unwrap();
        let expected = boundary(&tree, g);
        prop_assert_eq!(engine.boundary(), expected.as_slice());
        let got = engine.site_log_likelihoods(theta, &data).unwrap();
        let want = enumerate_sites(&tree, g, &data, theta);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!(rel_close(a.exp(), b.exp(), 1e-10), "g={} {} vs {}", g, a, b);
        }
    }

    #[test]
    fn segmented_likelihood_sums_segments(seed in any::<u64>(), m in 2usize..=10, s_pick in 0usize..100, t1 in 0.05f64..5.0, t2 in 0.05f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = Tree::parse_newick(&random_newick(4, &mut rng)).unwrap();
        let data = random_data(4, m, &mut rng);
        let s = 2 + s_pick % (m - 1);
        let state = ChangePointState::new(vec![s], vec![t1, t2]).unwrap();
        for g in [1, 3] {
            let engine = LikelihoodEngine::new(tree.clone(), g).unwrap();
            let got = engine.segmented_log_likelihood(&state, &data);
            let want: f64 = (0..m)
                .map(|l| enumerate_site(&tree, g, data.column(l), if l + 1 < s { t1 } else { t2 }).ln())
                .sum();
            prop_assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0));
        }
    }
}

#[test]
fn four_leaf_boundary_example() {
    // Balanced tree: leaves 1..4, cherries 5 = (1,2) and 6 = (3,4), root 7.
    let tree = Tree::parse_newick("((A:0.3,B:0.6):0.4,(C:0.2,D:0.9):0.5);").unwrap();
    assert_eq!(boundary(&tree, 2), vec![7]);
    assert_eq!(boundary(&tree, 3), vec![6, 7]);
    assert_eq!(boundary(&tree, 4), vec![5, 6]);
    // g = n cuts every internal node: each leaf hangs off its own
    // stationary parent state, and leaves sharing a parent share it.
    let theta = 0.9;
    let engine = LikelihoodEngine::new(tree.clone(), 4).unwrap();
    let col = [0u8, 1, 2, 2];
    let cherry = |t1: f64, t2: f64, a: u8, b: u8| -> f64 {
        (0..4u8).map(|r| 0.25 * common::jc(theta, t1, r, a) * common::jc(theta, t2, r, b)).sum()
    };
    let want = cherry(0.3, 0.6, 0, 1) * cherry(0.2, 0.9, 2, 2);
    let data = phylocp_core::SequenceData::from_rows(
        ["A", "B", "C", "D"].map(String::from).to_vec(),
        col.iter().map(|&c| vec![c]).collect(),
    )
    .unwrap();
    let got = engine.site_log_likelihoods(theta, &data).unwrap()[0];
    assert!((got - want.ln()).abs() < 1e-12);
}

#[test]
fn linear_cost_in_sites() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tree = Tree::parse_newick(&random_newick(8, &mut rng)).unwrap();
    let engine = LikelihoodEngine::new(tree, 1).unwrap();
    let small = random_data(8, 200, &mut rng);
    let large = random_data(8, 800, &mut rng);
    let time = |d| {
        (0..5)
            .map(|_| phylocp_core::likelihood::complexity_probe(&engine, d, 0.8, 200).unwrap().as_secs_f64())
            .fold(f64::INFINITY, f64::min)
    };
    let ratio = time(&large) / time(&small);
    assert!((1.5..12.0).contains(&ratio), "4x sites took {ratio}x time");
}
