//! The hand-computed diagnostics fixtures and a checker shared by the
//! integration and acceptance tests.

use phylocp_core::diagnostics::{autocorrelation, central_interval, chain_ess, geweke_z, hpd_interval, weighted_ess};
use serde_json::Value;

pub const DIAGNOSTICS: &str = include_str!("../fixtures/diagnostics.json");

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

/// Expands the named sample sets used by the interval fixtures.
fn samples(name: &str) -> Vec<f64> {
    match name {
        "1..=100" => (1..=100).map(f64::from).collect(),
        "1..=20 and 100" => (1..=20).chain([100]).map(f64::from).collect(),
        "ten 0s then 1..=10" => [0; 10].into_iter().chain(1..=10).map(f64::from).collect(),
        other => panic!("unknown sample set {other}"),
    }
}

fn geweke_series(pattern: &str) -> Vec<f64> {
    assert_eq!(pattern, "t mod 2 + [t >= 50], t = 0..99");
    (0..100).map(|t| (t % 2 + (t >= 50) as i32) as f64).collect()
}

/// Every fixture as `(label, computed, expected)`.
pub fn diagnostics_cases() -> Vec<(String, f64, f64)> {
    let f: Value = serde_json::from_str(DIAGNOSTICS).unwrap();
    let mut out = Vec::new();
    for c in f["acf"].as_array().unwrap() {
        let lag = c["lag"].as_u64().unwrap() as usize;
        out.push((format!("acf lag {lag}"), autocorrelation(&floats(&c["series"]), lag).unwrap(), c["value"].as_f64().unwrap()));
    }
    for c in f["weighted_ess"].as_array().unwrap() {
        out.push(("weighted ess".into(), weighted_ess(&floats(&c["weights"])).unwrap(), c["value"].as_f64().unwrap()));
    }
    for c in f["chain_ess"].as_array().unwrap() {
        out.push(("chain ess".into(), chain_ess(&floats(&c["series"])).unwrap(), c["value"].as_f64().unwrap()));
    }
    for c in f["geweke"].as_array().unwrap() {
        let z = geweke_z(&geweke_series(c["pattern"].as_str().unwrap()), c["first"].as_f64().unwrap(), c["last"].as_f64().unwrap()).unwrap();
        out.push(("geweke".into(), z, c["value"].as_f64().unwrap()));
    }
    for (key, f_interval) in [("hpd", hpd_interval as fn(&[f64], f64) -> _), ("central", central_interval)] {
        for c in f[key].as_array().unwrap() {
            let (lo, hi) = f_interval(&samples(c["samples"].as_str().unwrap()), c["mass"].as_f64().unwrap()).unwrap();
            let want = floats(&c["value"]);
            out.push((format!("{key} lower"), lo, want[0]));
            out.push((format!("{key} upper"), hi, want[1]));
        }
    }
    out
}

pub fn fixture_tolerance() -> f64 {
    serde_json::from_str::<Value>(DIAGNOSTICS).unwrap()["tolerance"].as_f64().unwrap()
}

/// Exhaustive check that `interval` is a shortest window holding
/// `ceil(mass n)` samples. Returns a description of any violation.
pub fn hpd_violation(samples: &[f64], mass: f64, interval: (f64, f64)) -> Option<String> {
    let n = samples.len();
    let need = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let inside = samples.iter().filter(|&&x| x >= interval.0 && x <= interval.1).count();
    if inside < need {
        return Some(format!("{interval:?} holds {inside} < {need} samples"));
    }
    let width = interval.1 - interval.0;
    for &a in samples {
        for &b in samples {
            if b >= a && b - a < width {
                let count = samples.iter().filter(|&&x| x >= a && x <= b).count();
                if count >= need {
                    return Some(format!("[{a}, {b}] is narrower and holds {count} samples"));
                }
            }
        }
    }
    None
}
