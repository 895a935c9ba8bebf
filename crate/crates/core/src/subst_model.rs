//! Nucleotide substitution models.
//!
//! States are encoded A=0, C=1, G=2, T=3 throughout the crate.

use crate::error::{domain, Result};

pub const N_STATES: usize = 4;

pub type TransitionMatrix = [[f64; N_STATES]; N_STATES];

/// A continuous-time Markov substitution process with a known stationary law.
///
/// `transition_matrix(t)[a][b]` is the probability of state `b` after a
/// branch of length `t` starting from state `a`.
pub trait SubstitutionModel: Send + Sync {
    fn transition_matrix(&self, t: f64) -> TransitionMatrix;
    fn stationary(&self) -> [f64; N_STATES];
}

/// Jukes-Cantor model parametrized by its total substitution rate.
///
/// The generator has off-diagonal entries `rate / 3`, so `rate` is the
/// expected number of substitutions per site per unit of branch length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JukesCantor {
    rate: f64,
}

impl JukesCantor {
    /// A zero rate is accepted and gives identity transitions.
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(domain(format!("substitution rate {rate} must be finite and >= 0")));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// `(P(a|a), P(b|a))` for `b != a` after a branch of length `t`.
    #[inline]
    pub fn same_and_diff(&self, t: f64) -> (f64, f64) {
        let decay = (-4.0 / 3.0 * self.rate * t).exp();
        (0.25 + 0.75 * decay, 0.25 - 0.25 * decay)
    }

    /// Checked single transition probability.
    pub fn transition_prob(&self, t: f64, from: usize, to: usize) -> Result<f64> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(domain(format!("branch length {t} must be finite and >= 0")));
        }
        if from >= N_STATES || to >= N_STATES {
            return Err(domain(format!("state out of range: {from} -> {to}")));
        }
        let (same, diff) = self.same_and_diff(t);
        Ok(if from == to { same } else { diff })
    }
}

impl SubstitutionModel for JukesCantor {
    fn transition_matrix(&self, t: f64) -> TransitionMatrix {
        debug_assert!(t >= 0.0);
        let (same, diff) = self.same_and_diff(t);
        let mut p = [[diff; N_STATES]; N_STATES];
        for (a, row) in p.iter_mut().enumerate() {
            row[a] = same;
        }
        p
    }

    fn stationary(&self) -> [f64; N_STATES] {
        [0.25; N_STATES]
    }
}
