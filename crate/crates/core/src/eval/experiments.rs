//! Synthetic experiment drivers: the unlabeled-ratio sweep, the
//! noise-resilience curve and the scalability study.
//!
//! Every run gets its own seed from the ladder `root -> row -> repeat`,
//! where `root` is `params.seed`. The dataset seed and the detector seed
//! both descend from the run seed, so any single run can be reproduced on
//! its own. Runs execute one after another, each inside a one-thread pool,
//! which keeps the wall-clock numbers comparable.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, minmax_normalize, SyntheticSpec};
use crate::ensemble::{run_odefs, OdefsParams};
use crate::error::{OdefsError, Result};
use crate::eval::metrics::{auc, precision_at_k};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SweepM,
    Noise,
    Scalability,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::SweepM => "sweep-m",
            Experiment::Noise => "noise",
            Experiment::Scalability => "scalability",
        }
    }

    /// Label of the swept parameter.
    pub fn parameter_name(self) -> &'static str {
        match self {
            Experiment::SweepM => "unlabeled_ratio",
            Experiment::Noise => "relevant_fraction",
            Experiment::Scalability => "cells",
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = OdefsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sweep-m" => Ok(Experiment::SweepM),
            "noise" => Ok(Experiment::Noise),
            "scalability" => Ok(Experiment::Scalability),
            other => Err(OdefsError::InvalidParameter(format!(
                "unknown experiment '{other}' (expected sweep-m, noise or scalability)"
            ))),
        }
    }
}

/// One ODEFS run on one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub row: usize,
    pub parameter: f64,
    pub repeat: usize,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub d_relevant: usize,
    pub auc: f64,
    pub precision_at_k: f64,
    /// The unweighted detector on the same dataset with the same subsamples.
    pub bare_auc: f64,
    pub bare_precision_at_k: f64,
    pub seconds: f64,
    pub n_candidates: usize,
    pub components: usize,
    pub mean_selected_features: f64,
    /// Mean over components of the fraction of selected features that are
    /// relevant.
    pub relevant_fraction: f64,
}

/// Aggregate over the repeats of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: f64,
    pub n: usize,
    pub d: usize,
    pub repeats: usize,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub mean_bare_auc: f64,
    pub std_bare_auc: f64,
    pub mean_seconds: f64,
    pub mean_selected_features: f64,
    pub mean_relevant_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub experiment: Experiment,
    /// Sorted by parameter value.
    pub rows: Vec<SweepRow>,
    pub runs: Vec<RunRecord>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; 0 for a single value.
fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

fn aggregate(runs: &[RunRecord]) -> SweepRow {
    let col = |f: fn(&RunRecord) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    let aucs = col(|r| r.auc);
    let bare = col(|r| r.bare_auc);
    SweepRow {
        parameter: runs[0].parameter,
        n: runs[0].n,
        d: runs[0].d,
        repeats: runs.len(),
        mean_auc: mean(&aucs),
        std_auc: std_dev(&aucs),
        mean_bare_auc: mean(&bare),
        std_bare_auc: std_dev(&bare),
        mean_seconds: mean(&col(|r| r.seconds)),
        mean_selected_features: mean(&col(|r| r.mean_selected_features)),
        mean_relevant_fraction: mean(&col(|r| r.relevant_fraction)),
    }
}

/// Seed of repeat `repeat` in row `row`.
pub fn run_seed(root: u64, row: usize, repeat: usize) -> u64 {
    let row_seed = seed::derive_indexed(root, seed::STREAM_ROW, row as u64);
    seed::derive_indexed(row_seed, seed::STREAM_REPEAT, repeat as u64)
}

/// Generates the dataset, runs ODEFS on one thread and scores both modes.
fn single_run(
    spec: &SyntheticSpec,
    params: &OdefsParams,
    row: usize,
    parameter: f64,
    repeat: usize,
) -> Result<RunRecord> {
    let run = run_seed(params.seed, row, repeat);
    let spec = SyntheticSpec {
        seed: seed::derive(run, seed::STREAM_DATA),
        ..spec.clone()
    };
    let raw = generate_synthetic(&spec)?;
    let (data, _) = minmax_normalize(&raw);
    let params = OdefsParams {
        seed: run,
        ..params.clone()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| OdefsError::InvalidParameter(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let out = pool.install(|| run_odefs(&data, &params))?;
    let seconds = start.elapsed().as_secs_f64();

    let labels = data.labels().expect("synthetic data is labelled");
    let model = &out.model;
    let relevant: Vec<f64> = model
        .components
        .iter()
        .map(|c| {
            let hits = c.feature_set.iter().filter(|&&k| k < spec.d_relevant).count();
            hits as f64 / c.feature_set.len() as f64
        })
        .collect();
    let record = RunRecord {
        row,
        parameter,
        repeat,
        seed: run,
        n: spec.n,
        d: spec.d,
        d_relevant: spec.d_relevant,
        auc: auc(&out.scores, labels)?,
        precision_at_k: precision_at_k(&out.scores, labels, None)?,
        bare_auc: auc(&out.initial_scores, labels)?,
        bare_precision_at_k: precision_at_k(&out.initial_scores, labels, None)?,
        seconds,
        n_candidates: model.candidate_set.len(),
        components: model.components.len(),
        mean_selected_features: model.mean_selected_features(),
        relevant_fraction: mean(&relevant),
    };
    log::info!(
        "row {row} ({parameter}) repeat {repeat}: auc {:.4}, bare {:.4}, {:.2}s",
        record.auc,
        record.bare_auc,
        record.seconds
    );
    Ok(record)
}

/// Runs every `(spec, parameter)` configuration `repeats` times.
fn sweep(
    experiment: Experiment,
    configs: Vec<(SyntheticSpec, OdefsParams, f64)>,
    repeats: usize,
) -> Result<SweepResult> {
    if configs.is_empty() {
        return Err(OdefsError::InvalidParameter("sweep needs at least one configuration".into()));
    }
    if repeats == 0 {
        return Err(OdefsError::InvalidParameter("repeats must be >= 1".into()));
    }
    for (spec, params, _) in &configs {
        spec.validate()?;
        params.validate()?;
    }
    let mut order: Vec<usize> = (0..configs.len()).collect();
    order.sort_by(|&a, &b| configs[a].2.total_cmp(&configs[b].2));

    let mut runs = Vec::with_capacity(configs.len() * repeats);
    let mut rows = Vec::with_capacity(configs.len());
    for &row in &order {
        let (spec, params, parameter) = &configs[row];
        let start = runs.len();
        for repeat in 0..repeats {
            runs.push(single_run(spec, params, row, *parameter, repeat)?);
        }
        rows.push(aggregate(&runs[start..]));
    }
    Ok(SweepResult {
        experiment,
        rows,
        runs,
    })
}

/// ODEFS with `m = r * m*` unlabeled examples for each ratio `r`.
pub fn sweep_unlabeled_ratio(
    spec: &SyntheticSpec,
    params: &OdefsParams,
    ratios: &[usize],
    repeats: usize,
) -> Result<SweepResult> {
    let m_star = params.m_star_for(spec.n);
    let configs = ratios
        .iter()
        .map(|&r| {
            let p = OdefsParams {
                m_star: Some(m_star),
                unlabeled_ratio: r,
                ..params.clone()
            };
            (spec.clone(), p, r as f64)
        })
        .collect();
    sweep(Experiment::SweepM, configs, repeats)
}

/// ODEFS against the bare detector as the share of relevant features
/// varies; `d_relevant = round(fraction * d)`.
pub fn noise_resilience(
    spec_base: &SyntheticSpec,
    params: &OdefsParams,
    relevant_fractions: &[f64],
    repeats: usize,
) -> Result<SweepResult> {
    let mut configs = Vec::with_capacity(relevant_fractions.len());
    for &f in relevant_fractions {
        if !(f > 0.0 && f <= 1.0) {
            return Err(OdefsError::InvalidParameter(format!(
                "relevant fraction must be in (0, 1], got {f}"
            )));
        }
        let spec = SyntheticSpec {
            d_relevant: ((f * spec_base.d as f64).round() as usize).max(1),
            ..spec_base.clone()
        };
        configs.push((spec, params.clone(), f));
    }
    sweep(Experiment::Noise, configs, repeats)
}

/// Wall-clock time for each `(n, d)`. The data follow the default
/// synthetic family with a fifth of the features relevant.
pub fn scalability(params: &OdefsParams, sizes: &[(usize, usize)], repeats: usize) -> Result<SweepResult> {
    let configs = sizes
        .iter()
        .map(|&(n, d)| {
            let spec = SyntheticSpec {
                n,
                d,
                d_relevant: ((d as f64 * 0.2).round() as usize).max(1),
                ..SyntheticSpec::default()
            };
            (spec, params.clone(), (n * d) as f64)
        })
        .collect();
    sweep(Experiment::Scalability, configs, repeats)
}

/// Least-squares line `y = a + b x` and its coefficient of determination.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (intercept, slope, r2)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> OdefsError + '_ {
    move |source| OdefsError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl SweepResult {
    /// One line per run.
    pub fn write_runs_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for run in &self.runs {
            w.serialize(run)?;
        }
        w.flush().map_err(io_err(Path::new("<runs writer>")))
    }

    /// One line per configuration.
    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(io_err(Path::new("<summary writer>")))
    }

    /// Writes `<name>_runs.csv` and `<name>_summary.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let name = self.experiment.name();
        let runs = dir.join(format!("{name}_runs.csv"));
        self.write_runs_csv(std::fs::File::create(&runs).map_err(io_err(&runs))?)?;
        let summary = dir.join(format!("{name}_summary.csv"));
        self.write_summary_csv(std::fs::File::create(&summary).map_err(io_err(&summary))?)
    }
}
