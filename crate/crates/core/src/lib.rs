//! Unsupervised outlier detection with embedded feature selection.
//!
//! A feature-weighted LeSiNN detector proposes outlier candidates; an
//! ensemble of components each learns sparse feature weights from a
//! pairwise ranking loss under thresholded self-paced example selection;
//! the final score combines the detector's scores on each component's
//! selected features.

pub mod cli;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod lesinn;
pub mod seed;
pub mod thresholding;
pub mod training;

pub use data::{generate_synthetic, load_csv, minmax_normalize, Dataset, NormalizationParams, SyntheticSpec};
pub use ensemble::{run_bare, run_odefs, EnsembleModel, LesinnParams, OdefsOutput, OdefsParams};
pub use error::{OdefsError, Result};
pub use lesinn::{FeatureWeights, LesinnModel, LesinnScorer, Query, WeightedScorer};
pub use thresholding::{select_candidates, CandidateSet};
pub use training::{train_component, ComponentState, TrainOptions, TrainingBatch};
