mod common;

use common::fixtures::{diagnostics_cases, fixture_tolerance, hpd_violation};
use phylocp_core::diagnostics::{central_interval, hpd_interval};
use proptest::prelude::*;

#[test]
fn hand_computed_fixtures() {
    let tol = fixture_tolerance();
    for (label, got, want) in diagnostics_cases() {
        assert!((got - want).abs() <= tol * want.abs().max(1.0), "{label}: {got} vs {want}");
    }
}

#[test]
fn short_inputs_are_rejected() {
    let few: Vec<f64> = (0..19).map(f64::from).collect();
    assert!(hpd_interval(&few, 0.95).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hpd_is_a_shortest_window(samples in prop::collection::vec(0u32..60, 20..120), mass in 0.5f64..0.99) {
        let samples: Vec<f64> = samples.into_iter().map(f64::from).collect();
        let interval = hpd_interval(&samples, mass).unwrap();
        prop_assert!(hpd_violation(&samples, mass, interval).is_none(), "{:?}", hpd_violation(&samples, mass, interval));
    }

    #[test]
    fn hpd_is_no_wider_than_central(samples in prop::collection::vec(-50.0f64..50.0, 20..120), mass in 0.5f64..0.99) {
        let (lo, hi) = hpd_interval(&samples, mass).unwrap();
        let (clo, chi) = central_interval(&samples, mass).unwrap();
        // Round the type-7 interval out to sample values; the comparison is
        // only meaningful when that window holds ceil(mass n) points.
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let outer_lo = sorted.iter().copied().filter(|&x| x <= clo).fold(sorted[0], f64::max);
        let outer_hi = sorted.iter().copied().filter(|&x| x >= chi).fold(sorted[sorted.len() - 1], f64::min);
        let need = (mass * sorted.len() as f64).ceil() as usize;
        prop_assume!(sorted.iter().filter(|&&x| x >= outer_lo && x <= outer_hi).count() >= need);
        prop_assert!(hi - lo <= outer_hi - outer_lo + 1e-12);
    }
}
