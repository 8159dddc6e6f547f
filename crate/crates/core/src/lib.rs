//! Anomaly detection for discrete and mixed tabular data by masked-probe
//! reconstruction surprisal.
//!
//! A sample is scored by masking random subsets of its coordinates at several
//! mask rates, asking a reconstruction estimator for the distribution of every
//! masked coordinate given the visible ones, and averaging the negative
//! log-likelihood of the true values. Two estimators are provided: a trained
//! network ([`model::ReconNet`]) and a training-free kernel-weighted
//! nearest-neighbour estimator ([`kernel::KernelReference`]).

pub mod error;
pub mod kernel;
pub mod knn;
pub mod metrics;
pub mod model;
pub mod probe;
pub mod rng;
pub mod schema;
pub mod scorer;
pub mod synthetic;

pub use error::{Error, Result};
pub use kernel::{np_predict, np_score_sample, KernelOptions, KernelReference};
pub use model::{pm_score_sample, Model, ModelConfig, ReconNet, TrainConfig};
pub use probe::{MaskedView, ProbeConfig};
pub use schema::{Code, EncodedDataset, FeatureKind, FeatureSpec, MASK};
pub use scorer::{score_dataset, score_sample, ReconstructionEstimator, ScoreReport};
pub use knn::{knn_score, KnnConfig};
pub use metrics::{pr_auc, roc_auc, LabeledScores, MetricsReport};
pub use synthetic::{OracleEstimator, Population, SyntheticSpec};
