//! Command-line front end: `detect`, `synth` and `experiment`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_csv, minmax_normalize, Dataset, SyntheticSpec};
use crate::ensemble::{run_odefs, ModelSummary, OdefsOutput, OdefsParams};
use crate::error::{OdefsError, Result};
use crate::eval::experiments::{noise_resilience, scalability, sweep_unlabeled_ratio, Experiment, SweepResult};
use crate::eval::metrics::{ranks, report, MetricReport};
use crate::eval::plot::{line_chart, plot_sweep, Series};

/// Which artifacts `detect` writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportFlags {
    pub scores: bool,
    pub model: bool,
    pub traces: bool,
    pub plots: bool,
}

impl Default for ReportFlags {
    fn default() -> Self {
        Self {
            scores: true,
            model: true,
            traces: false,
            plots: false,
        }
    }
}

/// Grids swept by `experiment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentGrid {
    pub ratios: Vec<usize>,
    pub fractions: Vec<f64>,
    /// `(n, d)` pairs for the scalability run.
    pub sizes: Vec<(usize, usize)>,
    pub repeats: usize,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        let mut sizes: Vec<(usize, usize)> = [1000, 2000, 4000, 8000].iter().map(|&n| (n, 100)).collect();
        sizes.extend([200, 400, 800].iter().map(|&d| (1000, d)));
        Self {
            ratios: (1..=12).collect(),
            fractions: vec![0.05, 0.10, 0.20, 0.35, 0.50, 1.00],
            sizes,
            repeats: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
    /// Name of the 0/1 ground-truth column in `input`, if any.
    pub label_column: Option<String>,
    /// Rescale every feature to [0, 1] before detection.
    pub normalize: bool,
    pub params: OdefsParams,
    pub output_dir: PathBuf,
    pub reports: ReportFlags,
    pub experiment: ExperimentGrid,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            synthetic: None,
            label_column: None,
            normalize: true,
            params: OdefsParams::default(),
            output_dir: PathBuf::from("odefs-out"),
            reports: ReportFlags::default(),
            experiment: ExperimentGrid::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| OdefsError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Checks everything `detect` needs.
    pub fn validate(&self) -> Result<()> {
        match (&self.input, &self.synthetic) {
            (Some(_), Some(_)) => {
                return Err(OdefsError::InvalidParameter(
                    "give either an input path or a synthetic spec, not both".into(),
                ))
            }
            (None, None) => {
                return Err(OdefsError::InvalidParameter(
                    "an input path or a synthetic spec is required".into(),
                ))
            }
            (None, Some(spec)) => {
                spec.validate()?;
                if self.label_column.is_some() {
                    return Err(OdefsError::InvalidParameter(
                        "label_column only applies to an input file".into(),
                    ));
                }
            }
            (Some(_), None) => {}
        }
        self.params.validate()
    }

    fn validate_experiment(&self, experiment: Experiment) -> Result<()> {
        let bad = |m: &str| Err(OdefsError::InvalidParameter(m.into()));
        if self.input.is_some() {
            return bad("experiments run on synthetic data; remove the input path");
        }
        if let Some(spec) = &self.synthetic {
            spec.validate()?;
        }
        self.params.validate()?;
        let grid = &self.experiment;
        if grid.repeats == 0 {
            return bad("repeats must be >= 1");
        }
        let empty = match experiment {
            Experiment::SweepM => grid.ratios.is_empty(),
            Experiment::Noise => grid.fractions.is_empty(),
            Experiment::Scalability => grid.sizes.is_empty(),
        };
        if empty {
            return bad("the experiment grid is empty");
        }
        Ok(())
    }
}

/// Loads (or generates) the data named by `config`, normalised if asked.
pub fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    let data = match (&config.input, &config.synthetic) {
        (Some(path), _) => load_csv(path, config.label_column.as_deref())?,
        (None, Some(spec)) => generate_synthetic(spec)?,
        (None, None) => {
            return Err(OdefsError::InvalidParameter(
                "an input path or a synthetic spec is required".into(),
            ))
        }
    };
    Ok(if config.normalize { minmax_normalize(&data).0 } else { data })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| OdefsError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn finish<W: Write>(mut w: W, path: &Path) -> Result<()> {
    w.flush().map_err(|source| OdefsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| OdefsError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Writes `index,score,rank[,label]`, one row per object.
pub fn write_scores_csv<W: Write>(writer: W, scores: &[f64], labels: Option<&[bool]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let rank = ranks(scores);
    if labels.is_some() {
        w.write_record(["index", "score", "rank", "label"])?;
    } else {
        w.write_record(["index", "score", "rank"])?;
    }
    for (i, s) in scores.iter().enumerate() {
        let mut record = vec![i.to_string(), s.to_string(), rank[i].to_string()];
        if let Some(labels) = labels {
            record.push(u8::from(labels[i]).to_string());
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|source| OdefsError::Io {
        path: "<scores writer>".into(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectMetrics {
    pub odefs: MetricReport,
    pub bare: MetricReport,
}

/// Contents of `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub n: usize,
    pub d: usize,
    pub params: OdefsParams,
    pub model: ModelSummary,
    pub metrics: Option<DetectMetrics>,
}

/// What a detect run produced.
#[derive(Debug)]
pub struct DetectOutcome {
    pub output: OdefsOutput,
    pub metrics: Option<DetectMetrics>,
    pub files: Vec<PathBuf>,
}

/// Runs the full pipeline on the configured data and writes the reports
/// into `config.output_dir`.
pub fn cmd_detect(config: &RunConfig) -> Result<DetectOutcome> {
    config.validate()?;
    let data = load_dataset(config)?;
    log::info!("detect: {} objects, {} features", data.n(), data.d());
    let output = run_odefs(&data, &config.params)?;
    let metrics = match data.labels() {
        Some(labels) => Some(DetectMetrics {
            odefs: report(&output.scores, labels, None)?,
            bare: report(&output.initial_scores, labels, None)?,
        }),
        None => None,
    };

    let dir = &config.output_dir;
    create_dir(dir)?;
    let mut files = Vec::new();

    if config.reports.scores {
        let path = dir.join("scores.csv");
        write_scores_csv(create(&path)?, &output.scores, data.labels())?;
        files.push(path);
    }
    if let Some(m) = &metrics {
        let path = dir.join("metrics.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["mode", "auc", "precision_at_k", "k"])?;
        for (mode, r) in [("odefs", &m.odefs), ("bare", &m.bare)] {
            w.write_record([mode.to_string(), r.auc.to_string(), r.precision_at_k.to_string(), r.k.to_string()])?;
        }
        w.flush().map_err(|source| OdefsError::Io {
            path: path.clone(),
            source,
        })?;
        files.push(path);
    }
    if config.reports.model {
        let path = dir.join("model.json");
        let mut params = config.params.clone();
        params.m_star = Some(output.model.m_star);
        params.ensemble_size = Some(output.model.ensemble_size);
        let model = ModelReport {
            n: data.n(),
            d: data.d(),
            params,
            model: output.model.summary(),
            metrics: metrics.clone(),
        };
        let mut w = create(&path)?;
        serde_json::to_writer_pretty(&mut w, &model)?;
        finish(w, &path)?;
        files.push(path);
    }
    if config.reports.traces {
        let path = dir.join("traces.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["component", "iteration", "lambda", "selected", "after_lambda", "after_v", "objective"])?;
        for c in &output.model.components {
            for t in &c.trace {
                w.write_record([
                    c.index.to_string(),
                    t.iteration.to_string(),
                    t.lambda.to_string(),
                    t.selected.to_string(),
                    t.after_lambda.to_string(),
                    t.after_v.to_string(),
                    t.after_w.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|source| OdefsError::Io {
            path: path.clone(),
            source,
        })?;
        files.push(path);
    }
    if config.reports.plots {
        let path = dir.join("objective.svg");
        let series: Vec<Series> = output
            .model
            .components
            .iter()
            .map(|c| Series {
                name: format!("component {}", c.index),
                points: c.trace.iter().map(|t| (t.iteration as f64, t.after_w)).collect(),
            })
            .collect();
        line_chart(&path, "training objective", "iteration", "objective", &series)?;
        files.push(path);
    }
    Ok(DetectOutcome { output, metrics, files })
}

/// Writes a labelled synthetic dataset to `path`.
pub fn cmd_synth(spec: &SyntheticSpec, path: &Path) -> Result<()> {
    spec.validate()?;
    let data = generate_synthetic(spec)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    data.save_csv(path, "label")
}

/// Runs one of the synthetic sweeps and writes its CSVs (and SVGs when
/// plots are enabled) into `config.output_dir`.
pub fn cmd_experiment(experiment: Experiment, config: &RunConfig) -> Result<SweepResult> {
    config.validate_experiment(experiment)?;
    let spec = config.synthetic.clone().unwrap_or_default();
    let grid = &config.experiment;
    let result = match experiment {
        Experiment::SweepM => sweep_unlabeled_ratio(&spec, &config.params, &grid.ratios, grid.repeats)?,
        Experiment::Noise => noise_resilience(&spec, &config.params, &grid.fractions, grid.repeats)?,
        Experiment::Scalability => scalability(&config.params, &grid.sizes, grid.repeats)?,
    };
    result.save(&config.output_dir)?;
    if config.reports.plots {
        plot_sweep(&result, &config.output_dir)?;
    }
    Ok(result)
}

#[derive(Debug, Parser)]
#[command(name = "odefs", version, about = "Outlier detection with embedded feature selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a CSV file or a synthetic dataset.
    Detect(DetectArgs),
    /// Write a labelled synthetic dataset.
    Synth(SynthArgs),
    /// Run one of the synthetic sweeps.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExperimentName {
    SweepM,
    Noise,
    Scalability,
}

impl From<ExperimentName> for Experiment {
    fn from(e: ExperimentName) -> Self {
        match e {
            ExperimentName::SweepM => Experiment::SweepM,
            ExperimentName::Noise => Experiment::Noise,
            ExperimentName::Scalability => Experiment::Scalability,
        }
    }
}

/// Flags shared by `detect` and `experiment`; each one overrides the
/// JSON config.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Thresholding rate.
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long)]
    pub m_star: Option<usize>,
    #[arg(long)]
    pub unlabeled_ratio: Option<usize>,
    #[arg(long)]
    pub ensemble_size: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Write SVG plots.
    #[arg(long)]
    pub plots: bool,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// CSV file with a header row.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub label_column: Option<String>,
    /// Use the default synthetic dataset instead of a file.
    #[arg(long, conflicts_with = "input")]
    pub synthetic: bool,
    /// Skip min-max normalisation.
    #[arg(long)]
    pub no_normalize: bool,
    /// Write per-iteration training traces.
    #[arg(long)]
    pub traces: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON file holding a synthetic spec.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub d_relevant: Option<usize>,
    #[arg(long)]
    pub outlier_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    pub name: ExperimentName,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
}

impl CommonArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.output {
            c.output_dir = v.clone();
        }
        let p = &mut c.params;
        if let Some(v) = self.seed {
            p.seed = v;
        }
        if let Some(v) = self.a {
            p.a = v;
        }
        if let Some(v) = self.m_star {
            p.m_star = Some(v);
        }
        if let Some(v) = self.unlabeled_ratio {
            p.unlabeled_ratio = v;
        }
        if let Some(v) = self.ensemble_size {
            p.ensemble_size = Some(v);
        }
        if let Some(v) = self.epsilon {
            p.epsilon = v;
        }
        if let Some(v) = self.theta {
            p.train.theta = v;
        }
        c.reports.plots |= self.plots;
        Ok(c)
    }
}

impl DetectArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let mut c = self.common.config()?;
        if let Some(v) = &self.input {
            c.input = Some(v.clone());
            c.synthetic = None;
        }
        if self.synthetic && c.synthetic.is_none() {
            c.input = None;
            c.synthetic = Some(SyntheticSpec::default());
        }
        if let Some(v) = &self.label_column {
            c.label_column = Some(v.clone());
        }
        c.normalize &= !self.no_normalize;
        c.reports.traces |= self.traces;
        Ok(c)
    }
}

impl SynthArgs {
    pub fn spec(&self) -> Result<SyntheticSpec> {
        let mut s = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| OdefsError::Io {
                    path: path.clone(),
                    source,
                })?;
                serde_json::from_str(&text)?
            }
            None => SyntheticSpec::default(),
        };
        if let Some(v) = self.n {
            s.n = v;
        }
        if let Some(v) = self.d {
            s.d = v;
        }
        if let Some(v) = self.d_relevant {
            s.d_relevant = v;
        }
        if let Some(v) = self.outlier_fraction {
            s.outlier_fraction = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        Ok(s)
    }
}

impl ExperimentArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let mut c = self.common.config()?;
        if let Some(v) = self.repeats {
            c.experiment.repeats = v;
        }
        if let Some(v) = &self.ratios {
            c.experiment.ratios = v.clone();
        }
        if let Some(v) = &self.fractions {
            c.experiment.fractions = v.clone();
        }
        Ok(c)
    }
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Detect(args) => {
            let outcome = cmd_detect(&args.config()?)?;
            let model = &outcome.output.model;
            println!(
                "{} candidates, {} components ({} dropped), mean |F| {:.1}",
                model.candidate_set.len(),
                model.components.len(),
                model.dropped.len(),
                model.mean_selected_features()
            );
            if let Some(m) = &outcome.metrics {
                println!(
                    "odefs auc {:.4} p@{} {:.4} | bare auc {:.4} p@{} {:.4}",
                    m.odefs.auc, m.odefs.k, m.odefs.precision_at_k, m.bare.auc, m.bare.k, m.bare.precision_at_k
                );
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Synth(args) => {
            cmd_synth(&args.spec()?, &args.output)?;
            println!("wrote {}", args.output.display());
        }
        Command::Experiment(args) => {
            let config = args.config()?;
            let result = cmd_experiment(args.name.into(), &config)?;
            for r in &result.rows {
                println!(
                    "{} = {}: auc {:.4} (bare {:.4}), {:.3}s",
                    result.experiment.parameter_name(),
                    r.parameter,
                    r.mean_auc,
                    r.mean_bare_auc,
                    r.mean_seconds
                );
            }
            println!("wrote results to {}", config.output_dir.display());
        }
    }
    Ok(())
}
