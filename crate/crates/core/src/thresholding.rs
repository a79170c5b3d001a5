//! Cantelli-style outlier thresholding.
//!
//! Objects whose initial score exceeds `mean + a * std` become outlier
//! candidates. By Cantelli's inequality at most `1 / (1 + a^2)` of any
//! distribution lies that far above its mean, which also holds for the
//! empirical distribution of the scores themselves.

use serde::{Deserialize, Serialize};

use crate::error::{OdefsError, Result};

pub const DEFAULT_THRESHOLD_RATE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub indices: Vec<usize>,
    pub mu: f64,
    /// Population standard deviation of the scores.
    pub sigma: f64,
    pub a: f64,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn threshold(&self) -> f64 {
        self.mu + self.a * self.sigma
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn select_candidates(scores: &[f64], a: f64) -> Result<CandidateSet> {
    if scores.len() < 2 {
        return Err(OdefsError::InvalidParameter(format!(
            "thresholding needs at least 2 scores, got {}",
            scores.len()
        )));
    }
    if !(a >= 0.0 && a.is_finite()) {
        return Err(OdefsError::InvalidParameter(format!(
            "thresholding rate a must be finite and >= 0, got {a}"
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(OdefsError::InvalidParameter("scores must be finite".into()));
    }
    let (mu, sigma) = mean_std(scores);
    let indices = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s - mu - a * sigma > 0.0)
        .map(|(i, _)| i)
        .collect();
    Ok(CandidateSet {
        indices,
        mu,
        sigma,
        a,
    })
}
