pub mod experiments;
pub mod metrics;
pub mod plot;

pub use experiments::{noise_resilience, scalability, sweep_unlabeled_ratio, Experiment, RunRecord, SweepResult, SweepRow};
pub use metrics::{auc, precision_at_k, MetricReport};
