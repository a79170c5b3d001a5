//! Per-component learning of feature weights.
//!
//! A component sees `m*` outlier examples drawn from the candidate set and
//! `m` unlabeled examples drawn from the whole dataset. Each outlier example
//! `i` carries a logistic pairwise ranking loss
//!
//! ```text
//! L_i(w) = 1/m * sum_j 1 / (1 + exp(s(x*_i, w) - s(x_j, w)))
//! ```
//!
//! and the component minimises the self-paced objective
//!
//! ```text
//! J(w, v) = 1/m* * sum_i (v_i L_i(w) - lambda v_i) + theta * |w|_1,   v_i in {0, 1}
//! ```
//!
//! by alternating three updates: raise `lambda` to `max(lambda, mean(L) + std(L))`,
//! set `v_i = [L_i < lambda]`, and decrease the `v`-weighted loss in `w` by
//! projected gradient descent. Every update is non-increasing in `J`, which
//! [`train_component`] records at all three checkpoints.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{OdefsError, Result};
use crate::lesinn::{FeatureWeights, WeightedScorer};
use crate::thresholding::mean_std;

/// Armijo sufficient-decrease constant for the projected line search.
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 30;
/// Largest factor by which a Barzilai-Borwein trial may exceed the last
/// accepted step.
const BB_GROWTH: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingBatch {
    pub outlier_examples: Vec<usize>,
    pub unlabeled_examples: Vec<usize>,
}

impl TrainingBatch {
    pub fn new(outlier_examples: Vec<usize>, unlabeled_examples: Vec<usize>, n: usize) -> Result<Self> {
        if outlier_examples.is_empty() || unlabeled_examples.is_empty() {
            return Err(OdefsError::InvalidParameter(
                "a training batch needs at least one outlier and one unlabeled example".into(),
            ));
        }
        if let Some(&bad) = outlier_examples
            .iter()
            .chain(&unlabeled_examples)
            .find(|&&i| i >= n)
        {
            return Err(OdefsError::InvalidParameter(format!(
                "batch index {bad} out of range for {n} objects"
            )));
        }
        Ok(Self {
            outlier_examples,
            unlabeled_examples,
        })
    }

    pub fn m_star(&self) -> usize {
        self.outlier_examples.len()
    }

    pub fn m(&self) -> usize {
        self.unlabeled_examples.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    /// L1 coefficient.
    pub theta: f64,
    pub max_outer_iterations: usize,
    /// Stop when the relative change of the objective between outer
    /// iterations falls below this.
    pub outer_tolerance: f64,
    pub inner_max_steps: usize,
    /// First trial step, as a fraction of `max(1, max_k w_k)` moved by the
    /// largest gradient coordinate.
    pub inner_initial_step: f64,
    /// Stop the inner descent when one step gains less than this
    /// (relative to `max(1, |f|)`).
    pub inner_tolerance: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            theta: 1e-4,
            max_outer_iterations: 50,
            outer_tolerance: 1e-6,
            inner_max_steps: 200,
            inner_initial_step: 0.1,
            inner_tolerance: 1e-6,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OdefsError::InvalidParameter(m));
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return bad(format!("theta must be >= 0, got {}", self.theta));
        }
        if self.max_outer_iterations == 0 {
            return bad("max_outer_iterations must be >= 1".into());
        }
        for (name, v) in [
            ("outer_tolerance", self.outer_tolerance),
            ("inner_initial_step", self.inner_initial_step),
            ("inner_tolerance", self.inner_tolerance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// `1 / (1 + exp(gap))` without overflow.
#[inline]
pub fn logistic_pair_loss(gap: f64) -> f64 {
    if gap >= 0.0 {
        let e = (-gap).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + gap.exp())
    }
}

struct BatchScores {
    outliers: Vec<f64>,
    unlabeled: Vec<f64>,
}

fn batch_scores<S: WeightedScorer + ?Sized>(batch: &TrainingBatch, scorer: &S, w: &FeatureWeights) -> BatchScores {
    BatchScores {
        outliers: batch
            .outlier_examples
            .iter()
            .map(|&i| scorer.score_object(i, w))
            .collect(),
        unlabeled: batch
            .unlabeled_examples
            .iter()
            .map(|&j| scorer.score_object(j, w))
            .collect(),
    }
}

fn losses_from_scores(scores: &BatchScores) -> Vec<f64> {
    let m = scores.unlabeled.len() as f64;
    scores
        .outliers
        .iter()
        .map(|&s| scores.unlabeled.iter().map(|&u| logistic_pair_loss(s - u)).sum::<f64>() / m)
        .collect()
}

/// Losses `L_i(w)` of every outlier example.
pub fn example_losses<S: WeightedScorer + ?Sized>(w: &FeatureWeights, batch: &TrainingBatch, scorer: &S) -> Vec<f64> {
    losses_from_scores(&batch_scores(batch, scorer, w))
}

/// Loss of outlier example `i`.
pub fn example_loss<S: WeightedScorer + ?Sized>(
    i: usize,
    w: &FeatureWeights,
    batch: &TrainingBatch,
    scorer: &S,
) -> f64 {
    let s = scorer.score_object(batch.outlier_examples[i], w);
    let m = batch.m() as f64;
    batch
        .unlabeled_examples
        .iter()
        .map(|&j| logistic_pair_loss(s - scorer.score_object(j, w)))
        .sum::<f64>()
        / m
}

/// The self-paced objective from precomputed losses.
///
/// Unselected examples contribute an exact `0.0`, so switching a `v_i` in
/// the direction the closed-form update prescribes can only lower the
/// floating-point sum.
pub fn objective_from_losses(losses: &[f64], v: &[bool], lambda: f64, theta: f64, l1: f64) -> f64 {
    assert_eq!(losses.len(), v.len(), "losses and v differ in length");
    let sum: f64 = losses
        .iter()
        .zip(v)
        .map(|(&l, &on)| if on { l - lambda } else { 0.0 })
        .sum();
    sum / losses.len() as f64 + theta * l1
}

pub fn objective_value<S: WeightedScorer + ?Sized>(
    w: &FeatureWeights,
    v: &[bool],
    lambda: f64,
    theta: f64,
    batch: &TrainingBatch,
    scorer: &S,
) -> f64 {
    let losses = example_losses(w, batch, scorer);
    objective_from_losses(&losses, v, lambda, theta, w.l1())
}

/// In-batch pairwise ranking statistic: the fraction of (outlier example,
/// unlabeled example) pairs in which the outlier example scores at least
/// as high.
pub fn empirical_j_star<S: WeightedScorer + ?Sized>(w: &FeatureWeights, batch: &TrainingBatch, scorer: &S) -> f64 {
    let scores = batch_scores(batch, scorer, w);
    let hits: usize = scores
        .outliers
        .iter()
        .map(|&s| scores.unlabeled.iter().filter(|&&u| s >= u).count())
        .sum();
    hits as f64 / (batch.m_star() * batch.m()) as f64
}

/// Age parameter update: `mean + std` of the current losses, never below
/// the previous value.
pub fn update_lambda(previous: Option<f64>, losses: &[f64]) -> f64 {
    assert!(!losses.is_empty(), "update_lambda needs at least one loss");
    let (mu, sigma) = mean_std(losses);
    match previous {
        None => mu + sigma,
        Some(prev) => prev.max(mu + sigma),
    }
}

/// Closed-form example selection: `v_i = [L_i < lambda]`.
pub fn update_v(losses: &[f64], lambda: f64) -> Vec<bool> {
    losses.iter().map(|&l| l < lambda).collect()
}

/// Scores and score gradients of every batch object at one `w`, with the
/// resulting example losses. None of it depends on `v`.
struct Probe {
    scores: BatchScores,
    out_grads: Vec<f64>,
    unl_grads: Vec<f64>,
    losses: Vec<f64>,
}

impl Probe {
    fn new<S: WeightedScorer + ?Sized>(w: &FeatureWeights, batch: &TrainingBatch, scorer: &S) -> Self {
        let d = scorer.n_features();
        let mut out_grads = vec![0.0; batch.m_star() * d];
        let mut unl_grads = vec![0.0; batch.m() * d];
        let scores = BatchScores {
            outliers: scorer.score_objects_with_gradient(&batch.outlier_examples, w, &mut out_grads),
            unlabeled: scorer.score_objects_with_gradient(&batch.unlabeled_examples, w, &mut unl_grads),
        };
        let losses = losses_from_scores(&scores);
        Self {
            scores,
            out_grads,
            unl_grads,
            losses,
        }
    }

    /// `1/m* * sum_i v_i L_i`, summed like [`objective_from_losses`].
    fn smooth(&self, v: &[bool]) -> f64 {
        self.losses
            .iter()
            .zip(v)
            .map(|(&l, &on)| if on { l } else { 0.0 })
            .sum::<f64>()
            / self.losses.len() as f64
    }

    /// Gradient of [`smooth`](Self::smooth) by the chain rule.
    fn gradient(&self, v: &[bool]) -> Vec<f64> {
        let (ms, m) = (self.scores.outliers.len(), self.scores.unlabeled.len());
        let d = self.out_grads.len() / ms;
        let scale = 1.0 / (ms as f64 * m as f64);
        let mut out_coef = vec![0.0; ms];
        let mut unl_coef = vec![0.0; m];
        for (a, &s) in self.scores.outliers.iter().enumerate() {
            if !v[a] {
                continue;
            }
            for (b, &u) in self.scores.unlabeled.iter().enumerate() {
                let l = logistic_pair_loss(s - u);
                // d/dgap of 1/(1+e^gap) is -l(1-l)
                let slope = l * (1.0 - l) * scale;
                out_coef[a] -= slope;
                unl_coef[b] += slope;
            }
        }

        let mut grad = vec![0.0; d];
        for (coef, g) in out_coef
            .iter()
            .zip(self.out_grads.chunks_exact(d))
            .chain(unl_coef.iter().zip(self.unl_grads.chunks_exact(d)))
        {
            if *coef != 0.0 {
                for (acc, gk) in grad.iter_mut().zip(g) {
                    *acc += coef * gk;
                }
            }
        }
        grad
    }
}

/// Value and gradient of the smooth part `1/m* * sum_i v_i L_i(w)`.
pub fn smooth_objective_and_gradient<S: WeightedScorer + ?Sized>(
    w: &FeatureWeights,
    v: &[bool],
    batch: &TrainingBatch,
    scorer: &S,
) -> (f64, Vec<f64>) {
    assert_eq!(v.len(), batch.m_star(), "v length must equal m*");
    let p = Probe::new(w, batch, scorer);
    (p.smooth(v), p.gradient(v))
}

/// Minimises `1/m* * sum_i v_i L_i(w) + theta |w|_1` over `w >= 0` by
/// projected gradient descent with a backtracking (Armijo) line search.
///
/// The returned weights never have a larger objective than `w_init`.
pub fn optimize_w<S: WeightedScorer + ?Sized>(
    w_init: &FeatureWeights,
    v: &[bool],
    theta: f64,
    batch: &TrainingBatch,
    scorer: &S,
    opts: &TrainOptions,
) -> Result<FeatureWeights> {
    descend(w_init, None, v, theta, batch, scorer, opts, None).map(|d| d.w)
}

/// Result of one [`descend`] call.
struct Descent {
    w: FeatureWeights,
    /// The batch evaluated at `w`.
    probe: Probe,
    /// Suggested first trial step for a later descent.
    step: Option<f64>,
}

/// [`optimize_w`] with warm starts: `start` may carry the evaluation at
/// `w_init` and `step` a first trial step from an earlier descent.
///
/// Without a `step`, the first trial moves the largest projected-gradient
/// coordinate by `inner_initial_step * max(1, max_k w_k)`. Later trials
/// use the Barzilai-Borwein step `s.s / s.y` of the last accepted move,
/// capped at four times that move's step, or double the accepted step
/// when the curvature estimate is not positive.
#[allow(clippy::too_many_arguments)]
fn descend<S: WeightedScorer + ?Sized>(
    w_init: &FeatureWeights,
    start: Option<Probe>,
    v: &[bool],
    theta: f64,
    batch: &TrainingBatch,
    scorer: &S,
    opts: &TrainOptions,
    step: Option<f64>,
) -> Result<Descent> {
    assert_eq!(v.len(), batch.m_star(), "v length must equal m*");
    let mut w = w_init.clone();
    let mut cur = start.unwrap_or_else(|| Probe::new(&w, batch, scorer));
    if !v.iter().any(|&on| on) {
        return Ok(Descent { w, probe: cur, step });
    }
    let mut cur_grad = cur.gradient(v);
    let mut f = cur.smooth(v) + theta * w.l1();
    let mut next_step = step;
    let mut steps = 0;

    while steps < opts.inner_max_steps {
        steps += 1;
        if cur_grad.iter().any(|g| !g.is_finite()) {
            return Err(OdefsError::NonFiniteGradient);
        }
        // On w >= 0 the L1 term is linear, so its gradient is theta everywhere.
        let grad: Vec<f64> = cur_grad.iter().map(|g| g + theta).collect();
        let projected_norm = w
            .as_slice()
            .iter()
            .zip(&grad)
            .map(|(&wk, &g)| if wk > 0.0 { g.abs() } else { (-g).max(0.0) })
            .fold(0.0, f64::max);
        if projected_norm == 0.0 {
            break;
        }
        let mut t = next_step.unwrap_or_else(|| opts.inner_initial_step * w.max().max(1.0) / projected_norm);

        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = FeatureWeights::project(
                w.as_slice()
                    .iter()
                    .zip(&grad)
                    .map(|(&wk, &g)| wk - t * g)
                    .collect(),
            )?;
            let predicted: f64 = grad
                .iter()
                .zip(cand.as_slice().iter().zip(w.as_slice()))
                .map(|(g, (c, o))| g * (c - o))
                .sum();
            if predicted < 0.0 {
                let p = Probe::new(&cand, batch, scorer);
                let fc = p.smooth(v) + theta * cand.l1();
                if fc <= f + ARMIJO * predicted {
                    accepted = Some((cand, p, fc));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((cand, p, fc)) = accepted else { break };
        let new_grad = p.gradient(v);
        let (mut ss, mut sy) = (0.0, 0.0);
        for k in 0..grad.len() {
            let sk = cand.as_slice()[k] - w.as_slice()[k];
            ss += sk * sk;
            sy += sk * (new_grad[k] - cur_grad[k]);
        }
        let bb = ss / sy;
        next_step = Some(if sy > 0.0 && bb.is_finite() { bb.min(BB_GROWTH * t) } else { 2.0 * t });
        let gain = f - fc;
        w = cand;
        cur = p;
        cur_grad = new_grad;
        f = fc;
        if gain <= opts.inner_tolerance * f.abs().max(1.0) {
            break;
        }
    }
    log::trace!("w descent: {steps} steps, objective {f:.6e}");
    Ok(Descent {
        w,
        probe: cur,
        step: next_step,
    })
}

/// Initial weights: descent from the all-ones vector with every outlier
/// example selected.
pub fn init_w0<S: WeightedScorer + ?Sized>(
    batch: &TrainingBatch,
    theta: f64,
    scorer: &S,
    opts: &TrainOptions,
) -> Result<FeatureWeights> {
    init_descent(batch, theta, scorer, opts).map(|d| d.w)
}

fn init_descent<S: WeightedScorer + ?Sized>(
    batch: &TrainingBatch,
    theta: f64,
    scorer: &S,
    opts: &TrainOptions,
) -> Result<Descent> {
    let v = vec![true; batch.m_star()];
    descend(&FeatureWeights::ones(scorer.n_features()), None, &v, theta, batch, scorer, opts, None)
}

/// Objective values at the three checkpoints of one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub lambda: f64,
    pub selected: usize,
    /// After raising lambda (old v, old w).
    pub after_lambda: f64,
    /// After re-selecting v.
    pub after_v: f64,
    /// After the w descent.
    pub after_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentState {
    pub w: FeatureWeights,
    pub v: Vec<bool>,
    pub lambda: f64,
    pub iteration: usize,
    /// Objective at every checkpoint, in order: after lambda, after v and
    /// after w for iteration 1, then for iteration 2, and so on.
    pub objective_history: Vec<f64>,
    pub trace: Vec<IterationTrace>,
    /// Objective at termination.
    pub final_loss: f64,
}

impl ComponentState {
    pub fn selected_count(&self) -> usize {
        self.v.iter().filter(|&&on| on).count()
    }

    pub fn write_trace_csv<W: Write>(&self, writer: W, component: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["component", "iteration", "lambda", "selected", "after_lambda", "after_v", "objective"])?;
        for t in &self.trace {
            w.write_record([
                component.to_string(),
                t.iteration.to_string(),
                t.lambda.to_string(),
                t.selected.to_string(),
                t.after_lambda.to_string(),
                t.after_v.to_string(),
                t.after_w.to_string(),
            ])?;
        }
        w.flush().map_err(|e| OdefsError::Io {
            path: "<trace writer>".into(),
            source: e,
        })
    }
}

/// Runs the alternating lambda / v / w updates for one component until
/// the objective stops changing or the iteration cap is reached.
pub fn train_component<S: WeightedScorer + ?Sized>(
    batch: &TrainingBatch,
    scorer: &S,
    opts: &TrainOptions,
) -> Result<ComponentState> {
    opts.validate()?;
    let theta = opts.theta;
    let Descent {
        mut w,
        mut probe,
        mut step,
    } = init_descent(batch, theta, scorer, opts)?;
    let mut v = vec![true; batch.m_star()];
    let mut lambda: Option<f64> = None;
    let mut previous: Option<f64> = None;
    let mut history = Vec::with_capacity(3 * opts.max_outer_iterations);
    let mut trace = Vec::with_capacity(opts.max_outer_iterations);

    for iteration in 1..=opts.max_outer_iterations {
        let lam = update_lambda(lambda, &probe.losses);
        lambda = Some(lam);
        let after_lambda = objective_from_losses(&probe.losses, &v, lam, theta, w.l1());

        v = update_v(&probe.losses, lam);
        let after_v = objective_from_losses(&probe.losses, &v, lam, theta, w.l1());

        let next = descend(&w, Some(probe), &v, theta, batch, scorer, opts, step)?;
        step = next.step;
        let mut after_w = objective_from_losses(&next.probe.losses, &v, lam, theta, next.w.l1());
        if after_w <= after_v {
            w = next.w;
            probe = next.probe;
        } else {
            // descent is measured on the smooth+L1 part; rounding in the
            // lambda term can disagree by an ulp, so keep the old point
            after_w = after_v;
            probe = Probe::new(&w, batch, scorer);
        }

        history.extend([after_lambda, after_v, after_w]);
        trace.push(IterationTrace {
            iteration,
            lambda: lam,
            selected: v.iter().filter(|&&on| on).count(),
            after_lambda,
            after_v,
            after_w,
        });

        let converged = previous.is_some_and(|prev: f64| {
            (after_w - prev).abs() <= opts.outer_tolerance * prev.abs().max(1e-12)
        });
        previous = Some(after_w);
        if converged {
            break;
        }
    }

    let final_loss = previous.expect("at least one outer iteration");
    Ok(ComponentState {
        w,
        v,
        lambda: lambda.expect("at least one outer iteration"),
        iteration: trace.len(),
        objective_history: history,
        trace,
        final_loss,
    })
}
