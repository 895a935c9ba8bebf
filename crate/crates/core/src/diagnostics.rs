//! Chain diagnostics: model probabilities, autocorrelation, effective sample
//! sizes, Geweke scores and posterior intervals.
//!
//! Everything here is a pure function of the chain records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pmmh::ChainRecord;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample autocorrelation at `lag`; NaN for a constant series.
pub fn autocorrelation(series: &[f64], lag: usize) -> Result<f64> {
    if series.len() <= lag {
        return Err(Error::Domain(format!(
            "lag {lag} needs more than {} points",
            series.len()
        )));
    }
    let mu = mean(series);
    let denom: f64 = series.iter().map(|x| (x - mu).powi(2)).sum();
    if denom == 0.0 {
        return Ok(f64::NAN);
    }
    let num: f64 = series
        .iter()
        .zip(&series[lag..])
        .map(|(a, b)| (a - mu) * (b - mu))
        .sum();
    Ok(num / denom)
}

/// `(sum w)^2 / sum w^2`.
pub fn weighted_ess(weights: &[f64]) -> Result<f64> {
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::Domain("weights must be finite and nonnegative".into()));
    }
    let s: f64 = weights.iter().sum();
    if s == 0.0 {
        return Err(Error::Domain("all weights are zero".into()));
    }
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    Ok(s * s / s2)
}

/// Effective sample size of a correlated series, summing autocorrelations
/// in adjacent pairs until a pair sum turns negative.
pub fn chain_ess(series: &[f64]) -> Option<f64> {
    let n = series.len();
    if n < 4 {
        return None;
    }
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = autocorrelation(series, lag).ok()? + autocorrelation(series, lag + 1).ok()?;
        if pair.is_nan() {
            return None;
        }
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    Some(n as f64 / tau.max(1.0))
}

/// Variance of the sample mean by non-overlapping batch means with
/// `floor(sqrt(n))` batches.
pub fn batch_means_variance(series: &[f64]) -> Option<f64> {
    let n = series.len();
    let batches = (n as f64).sqrt().floor() as usize;
    if batches < 2 {
        return None;
    }
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| mean(&series[b * size..(b + 1) * size]))
        .collect();
    let mu = mean(&means);
    let var = means.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Some(var / batches as f64)
}

/// Monte Carlo standard error of the mean.
pub fn mcse(series: &[f64]) -> Option<f64> {
    batch_means_variance(series).map(f64::sqrt)
}

/// Geweke's score comparing the first `first_frac` and last `last_frac`
/// of a chain; NaN when both window variances vanish.
pub fn geweke_z(series: &[f64], first_frac: f64, last_frac: f64) -> Result<f64> {
    if !(first_frac > 0.0 && last_frac > 0.0 && first_frac + last_frac <= 1.0) {
        return Err(Error::Domain(format!(
            "window fractions {first_frac} and {last_frac} are invalid"
        )));
    }
    let n = series.len();
    let a = (first_frac * n as f64).floor() as usize;
    let b = (last_frac * n as f64).floor() as usize;
    if a < 10 || b < 10 {
        return Err(Error::Domain(format!(
            "a chain of {n} points leaves fewer than 10 points in a window"
        )));
    }
    let first = &series[..a];
    let last = &series[n - b..];
    let (va, vb) = (
        batch_means_variance(first).expect("window has >= 10 points"),
        batch_means_variance(last).expect("window has >= 10 points"),
    );
    let diff = mean(first) - mean(last);
    if va + vb == 0.0 {
        return Ok(if diff == 0.0 { f64::NAN } else { f64::INFINITY.copysign(diff) });
    }
    Ok(diff / (va + vb).sqrt())
}

pub const MIN_HPD_SAMPLES: usize = 20;

/// Shortest interval holding at least `mass` of the samples; ties go to
/// the smallest lower end.
pub fn hpd_interval(samples: &[f64], mass: f64) -> Result<(f64, f64)> {
    if samples.len() < MIN_HPD_SAMPLES {
        return Err(Error::Domain(format!(
            "an HPD interval needs at least {MIN_HPD_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(Error::Domain(format!("mass {mass} is not in (0, 1]")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let width = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let mut best = 0;
    for i in 1..=n - width {
        if sorted[i + width - 1] - sorted[i] < sorted[best + width - 1] - sorted[best] {
            best = i;
        }
    }
    Ok((sorted[best], sorted[best + width - 1]))
}

/// Linearly interpolated sample quantile (type 7).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// The central interval between the `(1 - mass) / 2` and `(1 + mass) / 2`
/// quantiles.
pub fn central_interval(samples: &[f64], mass: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Domain("no samples".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - mass) / 2.0;
    Ok((quantile(&sorted, tail), quantile(&sorted, 1.0 - tail)))
}

/// Interval summaries of one scalar parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub mean: f64,
    pub mcse: Option<f64>,
    /// `mean +- 1.96 mcse`.
    pub mean_interval: Option<(f64, f64)>,
    /// 2.5% and 97.5% sample quantiles.
    pub central_interval: (f64, f64),
    pub hpd_interval: Option<(f64, f64)>,
    pub geweke_z: Option<f64>,
}

impl ParameterSummary {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mu = mean(samples);
        let se = mcse(samples);
        Some(Self {
            mean: mu,
            mcse: se,
            mean_interval: se.map(|s| (mu - 1.96 * s, mu + 1.96 * s)),
            central_interval: central_interval(samples, 0.95).ok()?,
            hpd_interval: hpd_interval(samples, 0.95).ok(),
            geweke_z: geweke_z(samples, 0.1, 0.5).ok().filter(|z| !z.is_nan()),
        })
    }
}

/// Parameters of the records that sit at one `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub count: usize,
    /// Keyed `s1..sk` and `theta1..theta{k+1}`.
    pub parameters: BTreeMap<String, ParameterSummary>,
    /// Most frequent first change-point; ties go to the smaller site.
    pub s1_mode: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub burn_in: usize,
    pub records: usize,
    pub model_probs: BTreeMap<usize, f64>,
    pub sample_counts: BTreeMap<usize, usize>,
    pub acceptance_ratio: Option<f64>,
    /// Autocorrelation of `k` by lag; absent where undefined.
    pub acf_k: BTreeMap<usize, Option<f64>>,
    pub ess_k: Option<f64>,
    pub geweke_k: Option<f64>,
    /// Per visited model, and `None` for requested models never visited.
    pub models: BTreeMap<usize, Option<ModelSummary>>,
}

pub const DEFAULT_LAGS: [usize; 6] = [1, 5, 10, 25, 50, 100];

pub fn parameter_names(k: usize) -> Vec<String> {
    (1..=k)
        .map(|j| format!("s{j}"))
        .chain((1..=k + 1).map(|j| format!("theta{j}")))
        .collect()
}

/// Parameter columns of the records at `k`, in `parameter_names` order.
pub fn parameter_samples(records: &[ChainRecord], k: usize) -> Vec<Vec<f64>> {
    let at_k: Vec<&ChainRecord> = records.iter().filter(|r| r.k() == k).collect();
    let mut columns = vec![Vec::with_capacity(at_k.len()); 2 * k + 1];
    for r in at_k {
        for (j, &s) in r.state.changepoints().iter().enumerate() {
            columns[j].push(s as f64);
        }
        for (j, &t) in r.state.rates().iter().enumerate() {
            columns[k + j].push(t);
        }
    }
    columns
}

/// Histogram of the first change-point among records at `k >= 1`.
pub fn s1_histogram(records: &[ChainRecord], k: usize) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for r in records.iter().filter(|r| r.k() == k && k > 0) {
        *hist.entry(r.state.changepoints()[0]).or_insert(0) += 1;
    }
    hist
}

fn model_summary(records: &[ChainRecord], k: usize) -> Option<ModelSummary> {
    let columns = parameter_samples(records, k);
    let count = columns[0].len();
    if count == 0 {
        return None;
    }
    let parameters = parameter_names(k)
        .into_iter()
        .zip(&columns)
        .filter_map(|(name, col)| ParameterSummary::from_samples(col).map(|s| (name, s)))
        .collect();
    let s1_mode = s1_histogram(records, k)
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(s, _)| s);
    Some(ModelSummary {
        count,
        parameters,
        s1_mode,
    })
}

/// Summarizes the records after `burn_in`; `requested` lists models whose
/// parameter summaries are wanted even if the chain never visits them.
pub fn summarize_chain(records: &[ChainRecord], burn_in: usize, requested: &[usize]) -> Result<ChainSummary> {
    if burn_in >= records.len() {
        return Err(Error::Domain(format!(
            "burn-in {burn_in} leaves no samples from {} records",
            records.len()
        )));
    }
    let kept = &records[burn_in..];
    let n = kept.len();
    let mut sample_counts = BTreeMap::new();
    for r in kept {
        *sample_counts.entry(r.k()).or_insert(0usize) += 1;
    }
    let model_probs = sample_counts
        .iter()
        .map(|(&k, &c)| (k, c as f64 / n as f64))
        .collect();
    let steps: Vec<&ChainRecord> = kept.iter().filter(|r| r.iteration > 0).collect();
    let acceptance_ratio =
        (!steps.is_empty()).then(|| steps.iter().filter(|r| r.accepted).count() as f64 / steps.len() as f64);

    let ks: Vec<f64> = kept.iter().map(|r| r.k() as f64).collect();
    let acf_k = DEFAULT_LAGS
        .iter()
        .filter(|&&lag| lag < n)
        .map(|&lag| (lag, autocorrelation(&ks, lag).ok().filter(|v| !v.is_nan())))
        .collect();
    let mut models: BTreeMap<usize, Option<ModelSummary>> = sample_counts
        .keys()
        .map(|&k| (k, model_summary(kept, k)))
        .collect();
    for &k in requested {
        models.entry(k).or_insert(None);
    }
    Ok(ChainSummary {
        burn_in,
        records: n,
        model_probs,
        sample_counts,
        acceptance_ratio,
        acf_k,
        ess_k: chain_ess(&ks),
        geweke_k: geweke_z(&ks, 0.1, 0.5).ok().filter(|z| !z.is_nan()),
        models,
    })
}

/// Gaussian kernel density estimate on an even grid, with Silverman's
/// bandwidth.
pub fn kde_grid(samples: &[f64], points: usize) -> Vec<(f64, f64)> {
    if samples.len() < 2 || points < 2 {
        return Vec::new();
    }
    let mu = mean(samples);
    let sd = (samples.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (samples.len() - 1) as f64).sqrt();
    let h = if sd > 0.0 {
        1.06 * sd * (samples.len() as f64).powf(-0.2)
    } else {
        1e-3 * mu.abs().max(1.0)
    };
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    (0..points)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            let d = samples.iter().map(|s| (-0.5 * ((x - s) / h).powi(2)).exp()).sum::<f64>() * norm;
            (x, d)
        })
        .collect()
}

/// Data behind the trace, ACF, change-point and rate plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    /// `(lag, acf of k)` for lags `0..=max_lag`.
    pub acf_k: Vec<(usize, Option<f64>)>,
    /// Per `k >= 1`: first change-point counts.
    pub s1_histograms: BTreeMap<usize, BTreeMap<usize, usize>>,
    /// Per `k`, per rate index: density grid.
    pub rate_densities: BTreeMap<usize, Vec<Vec<(f64, f64)>>>,
}

pub fn plot_data(records: &[ChainRecord], burn_in: usize, max_lag: usize, grid_points: usize) -> Result<PlotData> {
    if burn_in >= records.len() {
        return Err(Error::Domain(format!(
            "burn-in {burn_in} leaves no samples from {} records",
            records.len()
        )));
    }
    let kept = &records[burn_in..];
    let ks: Vec<f64> = kept.iter().map(|r| r.k() as f64).collect();
    let acf_k = (0..=max_lag.min(ks.len() - 1))
        .map(|lag| (lag, autocorrelation(&ks, lag).ok().filter(|v| !v.is_nan())))
        .collect();
    let mut models: Vec<usize> = kept.iter().map(|r| r.k()).collect();
    models.sort_unstable();
    models.dedup();
    let s1_histograms = models
        .iter()
        .filter(|&&k| k > 0)
        .map(|&k| (k, s1_histogram(kept, k)))
        .collect();
    let rate_densities = models
        .iter()
        .map(|&k| {
            let cols = parameter_samples(kept, k);
            (k, cols[k..].iter().map(|c| kde_grid(c, grid_points)).collect())
        })
        .collect();
    Ok(PlotData {
        acf_k,
        s1_histograms,
        rate_densities,
    })
}
