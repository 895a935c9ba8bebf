//! The trans-dimensional change-point state, its prior, and the proposal
//! kernels shared by the SMC sampler, PMMH and the ABC baselines.
//!
//! Sites are numbered `1..=m`. A state with change-points
//! `1 < s_1 < ... < s_k <= m` has `k + 1` segments, segment `j` covering
//! sites `[s_{j-1}, s_j)` with `s_0 = 1` and `s_{k+1} = m + 1`.

use std::ops::Range;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};

/// A point `(k, s_{1:k}, theta_{1:k+1})` of the trans-dimensional space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePointState {
    changepoints: Vec<usize>,
    rates: Vec<f64>,
}

impl ChangePointState {
    pub fn new(changepoints: Vec<usize>, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != changepoints.len() + 1 {
            return Err(domain(format!(
                "{} change-points need {} rates, got {}",
                changepoints.len(),
                changepoints.len() + 1,
                rates.len()
            )));
        }
        if changepoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(domain("change-points must be strictly increasing"));
        }
        if changepoints.first().is_some_and(|&s| s < 2) {
            return Err(domain("change-points must be at site 2 or later"));
        }
        if let Some(r) = rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(domain(format!("rate {r} must be finite and >= 0")));
        }
        Ok(Self {
            changepoints,
            rates,
        })
    }

    /// Single-segment state.
    pub fn constant(rate: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![rate])
    }

    pub fn k(&self) -> usize {
        self.changepoints.len()
    }

    pub fn changepoints(&self) -> &[usize] {
        &self.changepoints
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Whether the change-points fit a sequence of `m` sites.
    pub fn fits(&self, m: usize) -> bool {
        self.changepoints.last().is_none_or(|&s| s <= m)
    }

    /// 0-based column ranges of each segment for `m` sites.
    pub fn segments(&self, m: usize) -> impl Iterator<Item = (Range<usize>, f64)> + '_ {
        debug_assert!(self.fits(m));
        let bounds = std::iter::once(1)
            .chain(self.changepoints.iter().copied())
            .chain(std::iter::once(m + 1));
        let starts = bounds.clone();
        starts
            .zip(bounds.skip(1))
            .zip(self.rates.iter().copied())
            .map(|((lo, hi), rate)| (lo - 1..hi - 1, rate))
    }
}

/// Prior on the state: uniform `k`, uniform `k`-subsets of `{2..m}`, and
/// i.i.d. Gamma(shape, scale) rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub k_support: Vec<usize>,
    pub gamma_shape: f64,
    pub gamma_scale: f64,
}

impl PriorSpec {
    pub fn new(k_support: Vec<usize>, gamma_shape: f64, gamma_scale: f64) -> Result<Self> {
        let spec = Self {
            k_support,
            gamma_shape,
            gamma_scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_support.is_empty() {
            return Err(Error::Config("k support is empty".into()));
        }
        if self.k_support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("k support must be strictly increasing".into()));
        }
        if !(self.gamma_shape > 0.0 && self.gamma_shape.is_finite())
            || !(self.gamma_scale > 0.0 && self.gamma_scale.is_finite())
        {
            return Err(Error::Config("gamma shape and scale must be positive".into()));
        }
        Ok(())
    }

    pub fn k_min(&self) -> usize {
        self.k_support[0]
    }

    pub fn k_max(&self) -> usize {
        *self.k_support.last().unwrap()
    }

    pub fn log_prior_k(&self, k: usize) -> f64 {
        if self.k_support.contains(&k) {
            -(self.k_support.len() as f64).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// `-ln C(m - 1, k)`: uniform over `k`-subsets of the `m - 1` eligible sites.
    pub fn log_prior_changepoints(&self, changepoints: &[usize], m: usize) -> f64 {
        let k = changepoints.len();
        let valid = changepoints.windows(2).all(|w| w[0] < w[1])
            && changepoints.first().is_none_or(|&s| s >= 2)
            && changepoints.last().is_none_or(|&s| s <= m);
        if !valid || k > m.saturating_sub(1) {
            return f64::NEG_INFINITY;
        }
        -ln_binomial(m.saturating_sub(1), k)
    }

    pub fn log_prior_rate(&self, rate: f64) -> f64 {
        gamma_log_density(rate, self.gamma_shape, self.gamma_scale)
    }

    /// Log density of the rates and change-points given `k`.
    pub fn log_prior_given_k(&self, state: &ChangePointState, m: usize) -> f64 {
        let rates: f64 = state.rates().iter().map(|&r| self.log_prior_rate(r)).sum();
        self.log_prior_changepoints(state.changepoints(), m) + rates
    }

    /// Full log prior `log p(k) + log p(s | k) + sum_j log Gamma(theta_j)`.
    pub fn log_prior(&self, state: &ChangePointState, m: usize) -> f64 {
        let lk = self.log_prior_k(state.k());
        if lk == f64::NEG_INFINITY {
            return lk;
        }
        lk + self.log_prior_given_k(state, m)
    }

    /// Draws `(s, theta)` from the prior given `k`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        k: usize,
        m: usize,
        rng: &mut R,
    ) -> Result<ChangePointState> {
        if !self.k_support.contains(&k) {
            return Err(domain(format!("k = {k} is outside the prior support")));
        }
        if k > m.saturating_sub(1) {
            return Err(domain(format!("{k} change-points do not fit {m} sites")));
        }
        let mut changepoints: Vec<usize> = rand::seq::index::sample(rng, m.saturating_sub(1), k)
            .into_iter()
            .map(|i| i + 2)
            .collect();
        changepoints.sort_unstable();
        let gamma = Gamma::new(self.gamma_shape, self.gamma_scale)
            .map_err(|e| Error::Config(e.to_string()))?;
        let rates = (0..=k).map(|_| gamma.sample(rng)).collect();
        Ok(ChangePointState {
            changepoints,
            rates,
        })
    }
}

/// Maps a proposed `k` to a fresh prior draw; used to seed an SMC run.
pub fn birth_death_adjust<R: Rng + ?Sized>(
    prior: &PriorSpec,
    k: usize,
    m: usize,
    rng: &mut R,
) -> Result<ChangePointState> {
    prior.sample(k, m, rng)
}

pub fn gamma_log_density(x: f64, shape: f64, scale: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NEG_INFINITY;
    }
    (shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()
}

pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Tuning of the proposal kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSpec {
    /// Odd window width of the random walk on `k`.
    pub k_width: usize,
    /// Odd window width of the per-change-point random walk.
    pub s_width: usize,
    /// Standard deviation of the log-scale rate random walk.
    pub rate_sigma: f64,
}

impl Default for ProposalSpec {
    fn default() -> Self {
        Self {
            k_width: 3,
            s_width: 3,
            rate_sigma: 0.25,
        }
    }
}

impl ProposalSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("k", self.k_width), ("change-point", self.s_width)] {
            if w < 3 || w % 2 == 0 {
                return Err(Error::Config(format!(
                    "{name} window width {w} must be odd and > 1"
                )));
            }
        }
        if !(self.rate_sigma > 0.0 && self.rate_sigma.is_finite()) {
            return Err(Error::Config("rate sigma must be positive".into()));
        }
        Ok(())
    }
}

/// A proposed value with the log proposal densities in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal<T> {
    pub value: T,
    pub log_q_forward: f64,
    pub log_q_reverse: f64,
}

impl<T> Proposal<T> {
    /// `log q(current | proposed) - log q(proposed | current)`.
    pub fn log_q_ratio(&self) -> f64 {
        self.log_q_reverse - self.log_q_forward
    }
}

/// Support of the window of width `width` centred on `center`, truncated to
/// `lo..=hi`.
fn window(center: usize, width: usize, lo: usize, hi: usize) -> Range<usize> {
    let half = (width - 1) / 2;
    let start = center.saturating_sub(half).max(lo);
    let end = (center + half).min(hi);
    if start > end {
        start..start
    } else {
        start..end + 1
    }
}

/// Log probability of moving `from -> to` under the truncated uniform walk on `k`.
pub fn k_proposal_log_density(from: usize, to: usize, width: usize, lo: usize, hi: usize) -> f64 {
    let support = window(from, width, lo, hi);
    if support.contains(&to) {
        -(support.len() as f64).ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Uniform draw from the window around `k`, truncated to `[lo, hi]`.
pub fn propose_k<R: Rng + ?Sized>(
    k: usize,
    width: usize,
    lo: usize,
    hi: usize,
    rng: &mut R,
) -> Proposal<usize> {
    let support = window(k, width, lo, hi);
    debug_assert!(!support.is_empty(), "k = {k} outside [{lo}, {hi}]");
    let value = rng.random_range(support.clone());
    Proposal {
        value,
        log_q_forward: -(support.len() as f64).ln(),
        log_q_reverse: k_proposal_log_density(value, k, width, lo, hi),
    }
}

/// Sequential two-step random walk on the change-points.
///
/// Position `j` draws uniformly from the window around `s_j` within
/// `{2..m}`, excluding values already drawn for earlier positions; the
/// result is sorted. Returns `None` when some window is exhausted, which
/// callers treat as a rejected move.
pub fn propose_changepoints<R: Rng + ?Sized>(
    current: &[usize],
    width: usize,
    m: usize,
    rng: &mut R,
) -> Option<Proposal<Vec<usize>>> {
    let mut drawn: Vec<usize> = Vec::with_capacity(current.len());
    for &s in current {
        let candidates: Vec<usize> = window(s, width, 2, m)
            .filter(|v| !drawn.contains(v))
            .collect();
        drawn.push(*candidates.choose(rng)?);
    }
    drawn.sort_unstable();
    let log_q_forward = changepoint_proposal_log_density(current, &drawn, width, m);
    let log_q_reverse = changepoint_proposal_log_density(&drawn, current, width, m);
    Some(Proposal {
        value: drawn,
        log_q_forward,
        log_q_reverse,
    })
}

/// Exact log probability that the sequential scheme started at `from`
/// produces the sorted vector `to`, summed over every order in which the
/// values of `to` could have been assigned to the positions of `from`.
pub fn changepoint_proposal_log_density(from: &[usize], to: &[usize], width: usize, m: usize) -> f64 {
    if from.len() != to.len() {
        return f64::NEG_INFINITY;
    }
    fn visit(from: &[usize], to: &[usize], width: usize, m: usize, used: &mut Vec<bool>, taken: &mut Vec<usize>) -> f64 {
        let j = taken.len();
        if j == from.len() {
            return 1.0;
        }
        let support = window(from[j], width, 2, m);
        let available = support.clone().filter(|v| !taken.contains(v)).count();
        if available == 0 {
            return 0.0;
        }
        let mut total = 0.0;
        for (idx, &v) in to.iter().enumerate() {
            if used[idx] || !support.contains(&v) {
                continue;
            }
            used[idx] = true;
            taken.push(v);
            total += visit(from, to, width, m, used, taken) / available as f64;
            taken.pop();
            used[idx] = false;
        }
        total
    }
    let p = visit(from, to, width, m, &mut vec![false; to.len()], &mut Vec::with_capacity(to.len()));
    p.ln()
}

/// Probability that the sequential scheme started at `from` runs out of
/// candidates for some position (a propose-failure).
pub fn changepoint_exhaustion_probability(from: &[usize], width: usize, m: usize) -> f64 {
    fn visit(from: &[usize], width: usize, m: usize, taken: &mut Vec<usize>) -> f64 {
        let j = taken.len();
        if j == from.len() {
            return 0.0;
        }
        let candidates: Vec<usize> = window(from[j], width, 2, m)
            .filter(|v| !taken.contains(v))
            .collect();
        if candidates.is_empty() {
            return 1.0;
        }
        let share = 1.0 / candidates.len() as f64;
        candidates
            .into_iter()
            .map(|v| {
                taken.push(v);
                let p = visit(from, width, m, taken);
                taken.pop();
                p * share
            })
            .sum()
    }
    visit(from, width, m, &mut Vec::with_capacity(from.len()))
}

/// Independent log-normal random walk on every rate.
pub fn propose_rates<R: Rng + ?Sized>(rates: &[f64], sigma: f64, rng: &mut R) -> Proposal<Vec<f64>> {
    let value: Vec<f64> = rates
        .iter()
        .map(|&r| {
            let z: f64 = StandardNormal.sample(rng);
            (r.ln() + sigma * z).exp()
        })
        .collect();
    Proposal {
        log_q_forward: rate_proposal_log_density(rates, &value, sigma),
        log_q_reverse: rate_proposal_log_density(&value, rates, sigma),
        value,
    }
}

/// Log density of the log-normal walk from `from` to `to`.
pub fn rate_proposal_log_density(from: &[f64], to: &[f64], sigma: f64) -> f64 {
    let norm = -(sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
    from.iter()
        .zip(to)
        .map(|(&a, &b)| {
            if !(a > 0.0 && b > 0.0) {
                return f64::NEG_INFINITY;
            }
            let d = b.ln() - a.ln();
            norm - b.ln() - d * d / (2.0 * sigma * sigma)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn base_prior() -> PriorSpec {
        PriorSpec::new(vec![0, 1], 2.0, 0.4).unwrap()
    }

    /// Every sorted k-subset of {2..=m}.
    fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
        fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for v in start..=m {
                cur.push(v);
                rec(v + 1, m, k, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(2, m, k, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn segments_cover_every_site() {
        let s = ChangePointState::new(vec![25], vec![0.75, 0.85]).unwrap();
        let segs: Vec<_> = s.segments(50).collect();
        assert_eq!(segs, vec![(0..24, 0.75), (24..50, 0.85)]);
        let s = ChangePointState::constant(1.0).unwrap();
        assert_eq!(s.segments(7).collect::<Vec<_>>(), vec![(0..7, 1.0)]);
        let s = ChangePointState::new(vec![2, 5], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(
            s.segments(5).collect::<Vec<_>>(),
            vec![(0..1, 1.0), (1..4, 2.0), (4..5, 3.0)]
        );
    }

    #[test]
    fn state_validation() {
        assert!(ChangePointState::new(vec![3, 3], vec![1.0; 3]).is_err());
        assert!(ChangePointState::new(vec![1], vec![1.0; 2]).is_err());
        assert!(ChangePointState::new(vec![4], vec![1.0]).is_err());
        assert!(ChangePointState::new(vec![], vec![-1.0]).is_err());
    }

    #[test]
    fn log_prior_k0() {
        let prior = base_prior();
        let s = ChangePointState::constant(0.8).unwrap();
        // Gamma(0.8; 2, 0.4) = 0.8 e^{-2} / 0.16
        let expected = (0.5f64).ln() + (0.8 * (-2.0f64).exp() / 0.16).ln();
        assert!((prior.log_prior(&s, 50) - expected).abs() < 1e-12);
    }

    #[test]
    fn log_prior_changepoint_uniform() {
        let prior = base_prior();
        let lp = prior.log_prior_changepoints(&[25], 50);
        assert!((lp - (1.0f64 / 49.0).ln()).abs() < 1e-12);
        assert_eq!(prior.log_prior_changepoints(&[30, 20], 50), f64::NEG_INFINITY);
        assert_eq!(prior.log_prior_changepoints(&[51], 50), f64::NEG_INFINITY);
        // Support violation in k.
        let s = ChangePointState::new(vec![3, 7], vec![1.0; 3]).unwrap();
        assert_eq!(prior.log_prior(&s, 50), f64::NEG_INFINITY);
    }

    #[test]
    fn gamma_density_integrates_to_one() {
        // Composite Simpson on (0, 40] with a fine grid.
        let (a, b, n) = (0.0, 40.0, 400_000);
        let h = (b - a) / n as f64;
        let f = |x: f64| gamma_log_density(x, 2.0, 0.4).exp();
        let mut sum = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        let integral = sum * h / 3.0;
        assert!((integral - 1.0).abs() < 1e-8, "{integral}");
    }

    #[test]
    fn prior_sampling_moments() {
        let prior = base_prior();
        let mut r = rng::stream(11, &[]);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| prior.sample(0, 50, &mut r).unwrap().rates()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        // Gamma(2, 0.4): mean 0.8, sd 0.4*sqrt(2).
        let se = 0.4 * 2f64.sqrt() / (draws.len() as f64).sqrt();
        assert!((mean - 0.8).abs() < 3.0 * se, "{mean}");
        let s = prior.sample(0, 50, &mut r).unwrap();
        assert!(s.changepoints().is_empty());
    }

    #[test]
    fn prior_changepoint_is_uniform() {
        let prior = base_prior();
        let mut r = rng::stream(12, &[]);
        let draws = 49_000;
        let mut counts = [0usize; 51];
        for _ in 0..draws {
            counts[prior.sample(1, 50, &mut r).unwrap().changepoints()[0]] += 1;
        }
        assert_eq!(counts[0] + counts[1], 0);
        let expected = draws as f64 / 49.0;
        let chi2: f64 = counts[2..]
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square(48) 0.99 quantile.
        assert!(chi2 < 73.68, "{chi2}");
    }

    #[test]
    fn birth_death_adjust_is_seeded_prior_draw() {
        let prior = base_prior();
        let a = birth_death_adjust(&prior, 1, 50, &mut rng::stream(3, &[])).unwrap();
        let b = birth_death_adjust(&prior, 1, 50, &mut rng::stream(3, &[])).unwrap();
        let c = birth_death_adjust(&prior, 1, 50, &mut rng::stream(4, &[])).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.k(), 1);
    }

    #[test]
    fn k_proposal_truncation() {
        // {-1, 0, 1} ∩ [0, 1] = {0, 1}.
        assert_eq!(k_proposal_log_density(0, 0, 3, 0, 1), -(2f64).ln());
        assert_eq!(k_proposal_log_density(0, 1, 3, 0, 1), -(2f64).ln());
        assert_eq!(k_proposal_log_density(1, 0, 3, 0, 1), -(2f64).ln());
        for to in 4..=6 {
            assert_eq!(k_proposal_log_density(5, to, 3, 0, 10), -(3f64).ln());
        }
        assert_eq!(k_proposal_log_density(5, 7, 3, 0, 10), f64::NEG_INFINITY);
        for to in 0..=2 {
            assert_eq!(k_proposal_log_density(0, to, 5, 0, 2), -(3f64).ln());
            assert_eq!(k_proposal_log_density(2, to, 5, 0, 2), -(3f64).ln());
        }
        let mut r = rng::stream(1, &[]);
        let p = propose_k(0, 3, 0, 1, &mut r);
        assert_eq!(p.log_q_ratio(), 0.0);
    }

    #[test]
    fn k_proposal_frequencies() {
        let mut r = rng::stream(2, &[]);
        let draws = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            counts[propose_k(0, 5, 0, 2, &mut r).value] += 1;
        }
        for c in counts {
            let p = 1.0 / 3.0;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((c as f64 / draws as f64 - p).abs() < 3.0 * se);
        }
    }

    #[test]
    fn changepoint_window_examples() {
        for v in 24..=26 {
            let lp = changepoint_proposal_log_density(&[25], &[v], 3, 50);
            assert!((lp - (1.0f64 / 3.0).ln()).abs() < 1e-15);
        }
        for v in 2..=3 {
            let lp = changepoint_proposal_log_density(&[2], &[v], 3, 50);
            assert!((lp - 0.5f64.ln()).abs() < 1e-15);
        }
        assert_eq!(
            changepoint_proposal_log_density(&[2], &[1], 3, 50),
            f64::NEG_INFINITY
        );
        // s = (10, 11): first draw 11 (1/3) then {10, 12} (1/2 each).
        // Sorted outcome (11, 12) only arises that way: 1/6.
        let lp = changepoint_proposal_log_density(&[10, 11], &[11, 12], 3, 50);
        assert!((lp - (1.0f64 / 6.0).ln()).abs() < 1e-15);
        // (10, 11) arises as 10 then 11 (1/3 * 1/2) or 11 then 10 (1/3 * 1/2).
        let lp = changepoint_proposal_log_density(&[10, 11], &[10, 11], 3, 50);
        assert!((lp - (1.0f64 / 3.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn changepoint_window_can_empty() {
        // From (3, 4, 5) with m = 5: drawing 4 then 5 leaves {4, 5} exhausted
        // for the third position: 1/3 * 1/2.
        let p = changepoint_exhaustion_probability(&[3, 4, 5], 3, 5);
        assert!((p - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(changepoint_exhaustion_probability(&[10, 11], 3, 50), 0.0);
        let mut r = rng::stream(5, &[]);
        let trials = 60_000;
        let failures = (0..trials)
            .filter(|_| propose_changepoints(&[3, 4, 5], 3, 5, &mut r).is_none())
            .count();
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((failures as f64 / trials as f64 - p).abs() < 3.0 * se);
    }

    #[test]
    fn rate_proposal_ratio_is_jacobian() {
        let mut r = rng::stream(6, &[]);
        let theta = [0.3, 1.7];
        let p = propose_rates(&theta, 0.25, &mut r);
        let jac: f64 = theta.iter().zip(&p.value).map(|(a, b)| a.ln() - b.ln()).sum();
        assert!(((p.log_q_forward - p.log_q_reverse) - jac).abs() < 1e-12);
        let tiny = propose_rates(&theta, 1e-12, &mut r);
        for (a, b) in theta.iter().zip(&tiny.value) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rate_proposal_median() {
        let mut r = rng::stream(7, &[]);
        let draws = 100_000;
        let mut v: Vec<f64> = (0..draws)
            .map(|_| propose_rates(&[1.0], 0.25, &mut r).value[0])
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let below = v.iter().filter(|&&x| x < 1.0).count() as f64 / draws as f64;
        let se = (0.25 / draws as f64).sqrt();
        assert!((below - 0.5).abs() < 3.0 * se, "{below}");
    }

    proptest! {
        #[test]
        fn k_proposal_sums_to_one(lo in 0usize..4, span in 0usize..6, w in prop::sample::select(vec![3usize, 5, 7])) {
            let hi = lo + span;
            for k in lo..=hi {
                let total: f64 = (lo..=hi).map(|to| k_proposal_log_density(k, to, w, lo, hi).exp()).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn changepoint_proposal_sums_to_one(m in 3usize..14, k in 1usize..4, w in prop::sample::select(vec![3usize, 5]), seed in 0u64..1000) {
            prop_assume!(k < m);
            let prior = PriorSpec::new(vec![k], 1.0, 1.0).unwrap();
            let from = prior.sample(k, m, &mut rng::stream(seed, &[])).unwrap();
            let outcomes = subsets(m, k);
            let total: f64 = outcomes
                .iter()
                .map(|to| changepoint_proposal_log_density(from.changepoints(), to, w, m).exp())
                .sum();
            let exhausted = changepoint_exhaustion_probability(from.changepoints(), w, m);
            prop_assert!((total + exhausted - 1.0).abs() < 1e-12);
        }
    }
}
