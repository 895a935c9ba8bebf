//! Independent oracles: brute-force enumeration, adaptive quadrature and
//! exact ABC acceptance probabilities. Nothing here calls the likelihood
//! engine.

#![allow(dead_code)]

pub mod fixtures;

use std::collections::BTreeMap;

use phylocp_core::{SequenceData, Tree};
use rand::Rng;
use statrs::function::gamma::ln_gamma;

/// Jukes-Cantor transition probability with total rate `theta`.
pub fn jc(theta: f64, t: f64, a: u8, b: u8) -> f64 {
    let e = (-4.0 * theta * t / 3.0).exp();
    if a == b {
        0.25 + 0.75 * e
    } else {
        0.25 - 0.25 * e
    }
}

pub fn gamma_ln_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    (shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()
}

/// Boundary set for cut-off `g`: removed nodes (ids above `2n - g`) that
/// are parents of kept nodes.
pub fn boundary(tree: &Tree, g: usize) -> Vec<usize> {
    let kept = 2 * tree.n_leaves() - g;
    let mut b: Vec<usize> = (1..=kept)
        .filter_map(|id| tree.parent(id))
        .filter(|&p| p > kept)
        .collect();
    b.sort_unstable();
    b.dedup();
    b
}

/// Site likelihood by summing over every joint assignment of the kept
/// internal nodes and the boundary nodes. Boundary nodes and a kept root
/// carry the stationary distribution.
pub fn enumerate_site(tree: &Tree, g: usize, column: &[u8], theta: f64) -> f64 {
    let n = tree.n_leaves();
    let kept = 2 * n - g;
    let bnd = boundary(tree, g);
    let free: Vec<usize> = (n + 1..=kept).chain(bnd.iter().copied()).collect();
    let mut states = vec![0u8; 2 * n];
    for (i, &s) in column.iter().enumerate() {
        states[i + 1] = s;
    }
    let mut total = 0.0;
    for code in 0..4usize.pow(free.len() as u32) {
        let mut c = code;
        for &id in &free {
            states[id] = (c % 4) as u8;
            c /= 4;
        }
        let mut p = 0.25f64.powi(bnd.len() as i32);
        for id in 1..=kept {
            match tree.parent(id) {
                Some(parent) => p *= jc(theta, tree.branch_length(id), states[parent], states[id]),
                None => p *= 0.25,
            }
        }
        total += p;
    }
    total
}

/// Per-site log-likelihoods of `data` at a constant rate.
pub fn enumerate_sites(tree: &Tree, g: usize, data: &SequenceData, theta: f64) -> Vec<f64> {
    (0..data.n_sites())
        .map(|l| enumerate_site(tree, g, data.column(l), theta).ln())
        .collect()
}

/// Random rooted binary tree in Newick form with `n` leaves.
pub fn random_newick<R: Rng>(n: usize, rng: &mut R) -> String {
    let mut parts: Vec<String> = (0..n).map(|i| format!("L{i}")).collect();
    while parts.len() > 1 {
        let a = parts.swap_remove(rng.random_range(0..parts.len()));
        let b = parts.swap_remove(rng.random_range(0..parts.len()));
        let la: f64 = rng.random_range(0.05..2.0);
        let lb: f64 = rng.random_range(0.05..2.0);
        parts.push(format!("({a}:{la},{b}:{lb})"));
    }
    format!("{}:{};", parts[0], rng.random_range(0.05..1.0))
}

pub fn random_data<R: Rng>(n: usize, m: usize, rng: &mut R) -> SequenceData {
    let names = (0..n).map(|i| format!("L{i}")).collect();
    let rows = (0..n)
        .map(|_| (0..m).map(|_| rng.random_range(0..4u8)).collect())
        .collect();
    SequenceData::from_rows(names, rows).unwrap()
}

fn simpson_step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `ln ∫ exp(log_f(θ)) Gamma(θ; shape, scale) dθ` over `(0, upper)`,
/// scaled by the integrand's maximum on a grid for stability.
pub fn log_integral<F: Fn(f64) -> f64>(log_f: F, shape: f64, scale: f64) -> f64 {
    let upper = scale * (shape + 60.0);
    let g = |t: f64| if t <= 0.0 { f64::NEG_INFINITY } else { log_f(t) + gamma_ln_pdf(t, shape, scale) };
    let peak = (1..4000)
        .map(|i| g(upper * i as f64 / 4000.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let pieces = 64;
    let total: f64 = (0..pieces)
        .map(|i| {
            let a = upper * i as f64 / pieces as f64;
            let b = upper * (i + 1) as f64 / pieces as f64;
            simpson(|t| (g(t) - peak).exp(), a, b, 1e-13)
        })
        .sum();
    peak + total.ln()
}

/// Exact `ln p(x | k)` for `k ∈ {0, 1}` with the change-point prior
/// uniform on `{2..m}`; each site's likelihood comes from enumeration.
pub fn exact_log_evidence(tree: &Tree, g: usize, data: &SequenceData, k: usize, shape: f64, scale: f64) -> f64 {
    let m = data.n_sites();
    let columns: Vec<Vec<u8>> = (0..m).map(|l| data.column(l).to_vec()).collect();
    let segment = |lo: usize, hi: usize| {
        log_integral(
            |t| columns[lo..hi].iter().map(|c| enumerate_site(tree, g, c, t).ln()).sum(),
            shape,
            scale,
        )
    };
    match k {
        0 => segment(0, m),
        1 => {
            let terms: Vec<f64> = (2..=m).map(|s| segment(0, s - 1) + segment(s - 1, m)).collect();
            log_sum_exp(&terms) - ((m - 1) as f64).ln()
        }
        _ => unimplemented!("oracle covers k <= 1"),
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// Posterior `P(k | x)` under a uniform prior on the given models.
pub fn model_posterior(log_evidence: &BTreeMap<usize, f64>) -> BTreeMap<usize, f64> {
    let values: Vec<f64> = log_evidence.values().copied().collect();
    let z = log_sum_exp(&values);
    log_evidence.iter().map(|(&k, &l)| (k, (l - z).exp())).collect()
}

/// Distribution of the mismatch count between one site of a two-leaf
/// tree simulated at `theta` and the observed column.
fn site_distance_pmf(tree: &Tree, column: &[u8], theta: f64) -> [f64; 3] {
    let t = tree.branch_length(1) + tree.branch_length(2);
    let mut pmf = [0.0; 3];
    for a in 0..4u8 {
        for b in 0..4u8 {
            let p = 0.25 * jc(theta, t, a, b);
            pmf[(a != column[0]) as usize + (b != column[1]) as usize] += p;
        }
    }
    pmf
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// `∫ P(D = d | θ) π(θ) dθ` for each total distance `d` of a segment.
fn segment_distance_pmf(tree: &Tree, data: &SequenceData, lo: usize, hi: usize, shape: f64, scale: f64) -> Vec<f64> {
    let width = 2 * (hi - lo) + 1;
    (0..width)
        .map(|d| {
            let at = |t: f64| {
                let pmf = (lo..hi).fold(vec![1.0], |acc, l| convolve(&acc, &site_distance_pmf(tree, data.column(l), t)));
                pmf[d]
            };
            let upper = scale * (shape + 60.0);
            (0..64)
                .map(|i| {
                    let a = upper * i as f64 / 64.0;
                    let b = upper * (i + 1) as f64 / 64.0;
                    simpson(|t| if t <= 0.0 { 0.0 } else { at(t) * gamma_ln_pdf(t, shape, scale).exp() }, a, b, 1e-14)
                })
                .sum()
        })
        .collect()
}

/// Exact ABC evidence `P(d(x̃, x) <= eps | k)` on a two-leaf tree.
pub fn abc_evidence_two_leaves(tree: &Tree, data: &SequenceData, k: usize, eps: f64, shape: f64, scale: f64) -> f64 {
    assert_eq!(tree.n_leaves(), 2);
    let m = data.n_sites();
    let within = |pmf: &[f64]| pmf.iter().enumerate().filter(|(d, _)| *d as f64 <= eps).map(|(_, p)| p).sum::<f64>();
    match k {
        0 => within(&segment_distance_pmf(tree, data, 0, m, shape, scale)),
        1 => {
            (2..=m)
                .map(|s| {
                    let left = segment_distance_pmf(tree, data, 0, s - 1, shape, scale);
                    let right = segment_distance_pmf(tree, data, s - 1, m, shape, scale);
                    within(&convolve(&left, &right))
                })
                .sum::<f64>()
                / (m - 1) as f64
        }
        _ => unimplemented!("oracle covers k <= 1"),
    }
}

/// Distribution of the sorted outcome of the sequential change-point walk,
/// by brute force over every sequence of draws; `None` collects failures.
pub fn changepoint_walk_distribution(from: &[usize], width: usize, m: usize) -> BTreeMap<Option<Vec<usize>>, f64> {
    fn go(from: &[usize], width: usize, m: usize, drawn: &mut Vec<usize>, p: f64, out: &mut BTreeMap<Option<Vec<usize>>, f64>) {
        let j = drawn.len();
        if j == from.len() {
            let mut key = drawn.clone();
            key.sort_unstable();
            *out.entry(Some(key)).or_insert(0.0) += p;
            return;
        }
        let half = (width - 1) / 2;
        let candidates: Vec<usize> = (from[j].saturating_sub(half)..=from[j] + half)
            .filter(|v| (2..=m).contains(v) && !drawn.contains(v))
            .collect();
        if candidates.is_empty() {
            *out.entry(None).or_insert(0.0) += p;
            return;
        }
        for v in &candidates {
            drawn.push(*v);
            go(from, width, m, drawn, p / candidates.len() as f64, out);
            drawn.pop();
        }
    }
    let mut out = BTreeMap::new();
    go(from, width, m, &mut Vec::new(), 1.0, &mut out);
    out
}

/// Sorted `k`-subsets of `{2..m}`.
pub fn subsets(k: usize, m: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, k: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for v in start..=m {
            cur.push(v);
            go(v + 1, k, m, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(2, k, m, &mut Vec::new(), &mut out);
    out
}
