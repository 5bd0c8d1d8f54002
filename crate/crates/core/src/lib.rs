//! Decentralized ensemble learning with Gaussian copulas.
//!
//! Each network node trains a linear classifier on its private data. The
//! categorical outputs of those classifiers are combined by a generative
//! model: class priors, per-classifier confusion distributions and an
//! equicorrelation Gaussian copula that captures how strongly the
//! classifiers err together. The single copula parameter is picked by grid
//! search on validation accuracy.
//!
//! Crate layout:
//!
//! * [`data`]: synthetic generators, CSV ingestion and node partitioning.
//! * [`learner`]: unregularized multinomial logistic regression.
//! * [`copula`]: normal quantile and the equicorrelation copula density.
//! * [`aggregation`]: output model estimation, scoring, grid search and the
//!   end-to-end ensemble fit.
//! * [`baselines`]: reference combiners (selection, weighted vote, stacking...).
//! * [`network`]: one-shot star protocol simulator with byte accounting.
//! * [`harness`]: Clopper-Pearson evaluation and the experiment loops.

pub mod aggregation;
pub mod baselines;
pub mod codec;
pub mod copula;
pub mod data;
pub mod error;
pub mod harness;
pub mod learner;
pub mod network;
pub mod rng;

pub use aggregation::{
    ensemble_log_scores, fit_delco, fit_output_model, grid_search_lambda, CopulaEnsemble,
    DelcoConfig, OutputModel, PredictionMatrix,
};
pub use baselines::{BaseModel, Classify};
pub use copula::{lambda_grid, std_normal_quantile, EquicorrelationCopula};
pub use data::{LabeledDataset, PartitionPlan};
pub use error::{Error, Result};
pub use learner::{train_logreg, LinearClassifier, TrainOptions};
pub use network::{predicted_load, run_protocol, NetworkTrace, ProtocolConfig};
