//! The full detection pipeline.
//!
//! 1. Score every object with the unweighted detector.
//! 2. Threshold the scores into an outlier candidate set.
//! 3. For each of `l` components: sample a batch, learn feature weights,
//!    keep the features whose weight exceeds `epsilon * max(w)`.
//! 4. Re-score all objects on each component's feature subset, normalise
//!    each score vector to unit sum, and combine them with weights
//!    `softmax(-loss)` over the components' final objective values.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{OdefsError, Result};
use crate::lesinn::{FeatureWeights, LesinnModel, LesinnScorer, WeightedScorer, DEFAULT_SUBSAMPLE_SIZE, DEFAULT_SUBSETS};
use crate::seed;
use crate::thresholding::{select_candidates, CandidateSet, DEFAULT_THRESHOLD_RATE};
use crate::training::{train_component, IterationTrace, TrainOptions, TrainingBatch};

pub const DEFAULT_EPSILON: f64 = 0.05;
pub const DEFAULT_UNLABELED_RATIO: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LesinnParams {
    pub c: usize,
    pub subsample_size: usize,
}

impl Default for LesinnParams {
    fn default() -> Self {
        Self {
            c: DEFAULT_SUBSETS,
            subsample_size: DEFAULT_SUBSAMPLE_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdefsParams {
    /// Thresholding rate.
    pub a: f64,
    /// Outlier examples per component; `None` picks 32 for `n <= 10^4`
    /// and 64 above.
    pub m_star: Option<usize>,
    /// Unlabeled examples per component, as a multiple of `m_star`.
    pub unlabeled_ratio: usize,
    /// Number of components; `None` means `2 * ceil(n_candidates / m_star)`.
    pub ensemble_size: Option<usize>,
    /// Relative weight threshold for feature selection.
    pub epsilon: f64,
    pub train: TrainOptions,
    pub lesinn: LesinnParams,
    pub seed: u64,
}

impl Default for OdefsParams {
    fn default() -> Self {
        Self {
            a: DEFAULT_THRESHOLD_RATE,
            m_star: None,
            unlabeled_ratio: DEFAULT_UNLABELED_RATIO,
            ensemble_size: None,
            epsilon: DEFAULT_EPSILON,
            train: TrainOptions::default(),
            lesinn: LesinnParams::default(),
            seed: 0,
        }
    }
}

impl OdefsParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OdefsError::InvalidParameter(m));
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return bad(format!("a must be >= 0, got {}", self.a));
        }
        if self.m_star == Some(0) {
            return bad("m_star must be >= 1".into());
        }
        if self.unlabeled_ratio == 0 {
            return bad("unlabeled_ratio must be >= 1".into());
        }
        if self.ensemble_size == Some(0) {
            return bad("ensemble_size must be >= 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must be in (0, 1), got {}", self.epsilon));
        }
        if self.lesinn.c == 0 || self.lesinn.subsample_size == 0 {
            return bad("LeSiNN c and subsample_size must be >= 1".into());
        }
        self.train.validate()
    }

    pub fn m_star_for(&self, n: usize) -> usize {
        self.m_star.unwrap_or(if n <= 10_000 { 32 } else { 64 })
    }

    pub fn ensemble_size_for(&self, n_candidates: usize, m_star: usize) -> usize {
        self.ensemble_size
            .unwrap_or(2 * n_candidates.div_ceil(m_star))
    }
}

/// Draws one component's batch: `m_star` candidates (without replacement
/// when there are enough of them) and `m` distinct objects from the whole
/// dataset.
pub fn sample_batch(n: usize, candidates: &CandidateSet, m_star: usize, m: usize, seed: u64) -> Result<TrainingBatch> {
    if candidates.is_empty() {
        return Err(OdefsError::EmptyCandidates { a: candidates.a });
    }
    if m > n {
        return Err(OdefsError::InvalidParameter(format!(
            "cannot draw {m} distinct unlabeled examples from {n} objects"
        )));
    }
    let mut rng = seed::rng(seed);
    let pool = &candidates.indices;
    let outliers = if pool.len() >= m_star {
        sample(&mut rng, pool.len(), m_star)
            .into_iter()
            .map(|k| pool[k])
            .collect()
    } else {
        (0..m_star)
            .map(|_| pool[rng.random_range(0..pool.len())])
            .collect()
    };
    let unlabeled = sample(&mut rng, n, m).into_vec();
    TrainingBatch::new(outliers, unlabeled, n)
}

/// Features whose weight is more than `epsilon` times the largest weight.
pub fn select_features(w: &FeatureWeights, epsilon: f64) -> Result<Vec<usize>> {
    let max = w.max();
    if max <= 0.0 {
        return Err(OdefsError::ZeroWeights);
    }
    Ok(w.as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &wk)| wk / max > epsilon)
        .map(|(k, _)| k)
        .collect())
}

/// Divides a non-negative score vector by its sum.
pub fn normalize_scores(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
        return Err(OdefsError::InvalidParameter(
            "scores to normalise must be finite and >= 0".into(),
        ));
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(OdefsError::ZeroScores);
    }
    Ok(raw.iter().map(|&s| s / total).collect())
}

/// `u_j = exp(-loss_j) / sum_k exp(-loss_k)`.
pub fn aggregation_weights(losses: &[f64]) -> Vec<f64> {
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let exps: Vec<f64> = losses.iter().map(|&l| (min - l).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentResult {
    pub index: usize,
    pub feature_set: Vec<usize>,
    /// Final self-paced objective value.
    pub loss: f64,
    pub w: FeatureWeights,
    pub selected_count: usize,
    pub iterations: usize,
    pub lambda: f64,
    pub selected_examples: usize,
    pub trace: Vec<IterationTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub components: Vec<ComponentResult>,
    pub aggregation_weights: Vec<f64>,
    pub candidate_set: CandidateSet,
    pub m_star: usize,
    pub m: usize,
    /// Components attempted, including dropped ones.
    pub ensemble_size: usize,
    /// Indices of components dropped as degenerate.
    pub dropped: Vec<usize>,
}

impl EnsembleModel {
    pub fn mean_selected_features(&self) -> f64 {
        let total: usize = self.components.iter().map(|c| c.selected_count).sum();
        total as f64 / self.components.len() as f64
    }

    pub fn summary(&self) -> ModelSummary {
        ModelSummary {
            candidates: CandidateSummary {
                n_candidates: self.candidate_set.len(),
                mu: self.candidate_set.mu,
                sigma: self.candidate_set.sigma,
                a: self.candidate_set.a,
            },
            m_star: self.m_star,
            m: self.m,
            ensemble_size: self.ensemble_size,
            dropped: self.dropped.clone(),
            mean_selected_features: self.mean_selected_features(),
            components: self
                .components
                .iter()
                .zip(&self.aggregation_weights)
                .map(|(c, &u)| ComponentSummary {
                    index: c.index,
                    features: c.feature_set.clone(),
                    loss: c.loss,
                    weight: u,
                    selected_count: c.selected_count,
                    iterations: c.iterations,
                    lambda: c.lambda,
                    selected_examples: c.selected_examples,
                })
                .collect(),
        }
    }
}

/// JSON view of a trained ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub candidates: CandidateSummary,
    pub m_star: usize,
    pub m: usize,
    pub ensemble_size: usize,
    pub dropped: Vec<usize>,
    pub mean_selected_features: f64,
    pub components: Vec<ComponentSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub n_candidates: usize,
    pub mu: f64,
    pub sigma: f64,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub index: usize,
    pub features: Vec<usize>,
    pub loss: f64,
    pub weight: f64,
    pub selected_count: usize,
    pub iterations: usize,
    pub lambda: f64,
    pub selected_examples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdefsOutput {
    pub scores: Vec<f64>,
    /// Unweighted detector scores from the first stage; identical to
    /// [`run_bare`] with the same parameters.
    pub initial_scores: Vec<f64>,
    pub model: EnsembleModel,
}

fn build_detector(data: &Dataset, lesinn: &LesinnParams, root_seed: u64) -> Result<LesinnModel> {
    LesinnModel::build(
        data,
        lesinn.c,
        lesinn.subsample_size.min(data.n()),
        seed::derive(root_seed, seed::STREAM_LESINN),
    )
}

/// Unweighted LeSiNN scores of every object.
pub fn run_bare(data: &Dataset, lesinn: &LesinnParams, root_seed: u64) -> Result<Vec<f64>> {
    let model = build_detector(data, lesinn, root_seed)?;
    Ok(model.score_all(data, &FeatureWeights::ones(data.d())))
}

fn train_one(
    index: usize,
    scorer: &LesinnScorer<'_>,
    candidates: &CandidateSet,
    params: &OdefsParams,
    m_star: usize,
    m: usize,
) -> Result<Option<(ComponentResult, Vec<f64>)>> {
    let n = scorer.n_objects();
    let component_seed = seed::derive_indexed(params.seed, seed::STREAM_COMPONENT, index as u64);
    let batch = sample_batch(n, candidates, m_star, m, component_seed)?;
    let state = train_component(&batch, scorer, &params.train)?;
    let features = match select_features(&state.w, params.epsilon) {
        Ok(f) => f,
        Err(OdefsError::ZeroWeights) => {
            log::warn!("component {index}: all feature weights are zero, dropped");
            return Ok(None);
        }
        Err(e) => return Err(e),
    };
    let indicator = FeatureWeights::indicator(scorer.n_features(), &features)?;
    let normalized = match normalize_scores(&scorer.score_all(&indicator)) {
        Ok(s) => s,
        Err(OdefsError::ZeroScores) => {
            log::warn!("component {index}: all subset scores are zero, dropped");
            return Ok(None);
        }
        Err(e) => return Err(e),
    };
    let result = ComponentResult {
        index,
        selected_count: features.len(),
        feature_set: features,
        loss: state.final_loss,
        iterations: state.iteration,
        lambda: state.lambda,
        selected_examples: state.selected_count(),
        w: state.w,
        trace: state.trace,
    };
    Ok(Some((result, normalized)))
}

/// Runs the whole ensemble on a (normalised) dataset.
pub fn run_odefs(data: &Dataset, params: &OdefsParams) -> Result<OdefsOutput> {
    params.validate()?;
    let n = data.n();
    let detector = build_detector(data, &params.lesinn, params.seed)?;
    let scorer = LesinnScorer::new(&detector, data);
    let initial_scores = scorer.score_all(&FeatureWeights::ones(data.d()));

    let candidate_set = select_candidates(&initial_scores, params.a)?;
    if candidate_set.is_empty() {
        return Err(OdefsError::EmptyCandidates { a: params.a });
    }
    let m_star = params.m_star_for(n);
    let m = (params.unlabeled_ratio * m_star).min(n);
    let ensemble_size = params.ensemble_size_for(candidate_set.len(), m_star);
    log::info!(
        "{} candidates (threshold {:.4}); {ensemble_size} components with m*={m_star}, m={m}",
        candidate_set.len(),
        candidate_set.threshold()
    );

    let trained: Vec<Option<(ComponentResult, Vec<f64>)>> = (0..ensemble_size)
        .into_par_iter()
        .map(|j| train_one(j, &scorer, &candidate_set, params, m_star, m))
        .collect::<Result<_>>()?;

    let mut dropped = Vec::new();
    let mut components = Vec::new();
    let mut normalized = Vec::new();
    for (j, item) in trained.into_iter().enumerate() {
        match item {
            Some((c, s)) => {
                components.push(c);
                normalized.push(s);
            }
            None => dropped.push(j),
        }
    }
    if components.is_empty() {
        return Err(OdefsError::AllComponentsDegenerate);
    }

    let losses: Vec<f64> = components.iter().map(|c| c.loss).collect();
    let weights = aggregation_weights(&losses);
    let mut scores = vec![0.0; n];
    for (u, tau) in weights.iter().zip(&normalized) {
        for (acc, &t) in scores.iter_mut().zip(tau) {
            *acc += u * t;
        }
    }

    Ok(OdefsOutput {
        scores,
        initial_scores,
        model: EnsembleModel {
            components,
            aggregation_weights: weights,
            candidate_set,
            m_star,
            m,
            ensemble_size,
            dropped,
        },
    })
}
