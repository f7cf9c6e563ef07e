//! Beliefs over a finite reaction-parameter set and their Bayes updates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on belief normalization enforced by constructors.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum BayesError {
    /// Raw weights that are negative or sum to a non-positive mass.
    #[error("weights do not form a distribution (sum = {sum})")]
    DegenerateMass { sum: f64 },
    /// Every parameter was ruled out by the observation.
    #[error("posterior has zero predictive mass")]
    DegeneratePosterior,
    #[error("parameter values must be finite and distinct")]
    InvalidParameterSet,
}

/// Ordered finite set of candidate reaction parameters.
///
/// Values are opaque to this module; the model layer decides what they mean
/// (an execution rate, an impact slope, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    values: Vec<f64>,
}

impl ParameterSet {
    pub fn new(values: Vec<f64>) -> Result<Self, BayesError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(BayesError::InvalidParameterSet);
        }
        for i in 0..values.len() {
            for j in i + 1..values.len() {
                if values[i] == values[j] {
                    return Err(BayesError::InvalidParameterSet);
                }
            }
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }
}

/// Belief over a [`ParameterSet`]: nonnegative weights summing to one.
///
/// Weights are kept as-is, however small; entries below machine noise are
/// never dropped implicitly.  Use [`Prior::truncate_below`] to prune
/// explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    weights: Vec<f64>,
}

impl Prior {
    /// Builds a belief from weights that must already be normalized.
    pub fn new(weights: Vec<f64>) -> Result<Self, BayesError> {
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || sum <= 0.0 {
            return Err(BayesError::DegenerateMass { sum });
        }
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(BayesError::DegenerateMass { sum });
        }
        Ok(Self { weights })
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0);
        Self {
            weights: vec![1.0 / k as f64; k],
        }
    }

    /// Point mass on parameter `k`.
    pub fn dirac(k: usize, len: usize) -> Self {
        assert!(k < len);
        let mut weights = vec![0.0; len];
        weights[k] = 1.0;
        Self { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    /// Belief-average of `f` over the parameter set.
    pub fn mean_of(&self, mut f: impl FnMut(usize) -> f64) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(k, w)| w * f(k))
            .sum()
    }

    /// Total variation distance, `0.5 * sum |w_k - w'_k|`.
    pub fn tv_distance(&self, other: &Prior) -> f64 {
        assert_eq!(self.len(), other.len());
        0.5 * self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    /// Opt-in pruning: zeroes weights below `eps` and renormalizes.
    pub fn truncate_below(&self, eps: f64) -> Result<Prior, BayesError> {
        let kept: Vec<f64> = self
            .weights
            .iter()
            .map(|&w| if w < eps { 0.0 } else { w })
            .collect();
        normalize(&kept)
    }

    /// Bit-exact key for memoization.
    pub fn bit_key(&self) -> Vec<u64> {
        self.weights.iter().map(|w| w.to_bits()).collect()
    }
}

/// Scales raw nonnegative weights to sum to one.
pub fn normalize(raw: &[f64]) -> Result<Prior, BayesError> {
    let sum: f64 = raw.iter().sum();
    if raw.iter().any(|w| *w < 0.0 || !w.is_finite()) || !sum.is_finite() || sum <= 0.0 {
        return Err(BayesError::DegenerateMass { sum });
    }
    Ok(Prior {
        weights: raw.iter().map(|w| w / sum).collect(),
    })
}

/// Density of an observation under the belief: `sum_k m_k q_k`.
pub fn predictive_density(prior: &Prior, likelihood: &[f64]) -> f64 {
    assert_eq!(prior.len(), likelihood.len(), "likelihood length mismatch");
    prior
        .weights
        .iter()
        .zip(likelihood)
        .map(|(m, q)| m * q)
        .sum()
}

/// Posterior after observing an outcome with the given per-parameter
/// likelihoods: `m'_k = m_k q_k / sum_j m_j q_j`.
pub fn bayes_update(prior: &Prior, likelihood: &[f64]) -> Result<Prior, BayesError> {
    assert_eq!(prior.len(), likelihood.len(), "likelihood length mismatch");
    debug_assert!(likelihood.iter().all(|q| *q >= 0.0));
    let raw: Vec<f64> = prior
        .weights
        .iter()
        .zip(likelihood)
        .map(|(m, q)| m * q)
        .collect();
    let mass: f64 = raw.iter().sum();
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(BayesError::DegeneratePosterior);
    }
    Ok(Prior {
        weights: raw.iter().map(|w| w / mass).collect(),
    })
}
