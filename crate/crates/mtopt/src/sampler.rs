//! Categorical task sampling.
//!
//! The sequential optimizer draws a task index at every inner step. The
//! sampler owns the categorical distribution; by default probabilities are
//! proportional to a fractional power of each task's dataset size, which
//! flattens the skew of very unbalanced task collections while still
//! favoring the larger ones.

use crate::error::{Error, Result};
use crate::rng::RandomSource;

/// Default dataset-size exponent: p_t proportional to N_t^(1/5).
pub const DEFAULT_SIZE_EXPONENT: f64 = 0.2;

/// A fixed categorical distribution over task indices `0..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSampler {
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl TaskSampler {
    /// Probabilities proportional to `counts[t]^exponent`.
    pub fn from_counts(counts: &[u64], exponent: f64) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptySampler);
        }
        if let Some((index, &count)) = counts.iter().enumerate().find(|(_, &c)| c == 0) {
            return Err(Error::InvalidCount { index, count });
        }
        if !exponent.is_finite() {
            return Err(Error::InvalidConfig {
                field: "sampler.exponent",
                message: format!("must be finite, got {exponent}"),
            });
        }
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(exponent)).collect();
        Self::from_weights(&weights)
    }

    /// Probabilities proportional to explicit positive weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptySampler);
        }
        if let Some((index, &weight)) = weights
            .iter()
            .enumerate()
            .find(|(_, &w)| !(w.is_finite() && w > 0.0))
        {
            return Err(Error::InvalidWeight { index, weight });
        }
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cumulative.push(acc);
        }
        // Guard the inverse-CDF search against the running sum landing a few
        // ulps under 1.
        *cumulative.last_mut().expect("non-empty") = 1.0;
        Ok(Self { probs, cumulative })
    }

    /// The uniform distribution over `tasks` indices.
    pub fn uniform(tasks: usize) -> Result<Self> {
        Self::from_weights(&vec![1.0; tasks])
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// One draw by inverse CDF: the first index whose cumulative mass
    /// exceeds a uniform variate. Always consumes exactly one draw.
    pub fn sample(&self, rng: &mut RandomSource) -> usize {
        let u = rng.u01();
        match self
            .cumulative
            .iter()
            .position(|&c| u < c)
        {
            Some(i) => i,
            None => self.probs.len() - 1,
        }
    }
}
