use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::real::{assemble, draw_clone_members, RunOutcome};
use super::{normalize_methods, wrap_rep, CiSettings, ExperimentReport, FittedMethods, Method, TestSource};
use crate::aggregation::{fit_aggregator, fit_delco_detailed, DelcoConfig};
use crate::baselines::{majority_vote_clone_setup, BaseModel, CLONE_POOL};
use crate::copula::lambda_grid;
use crate::data::{pca_class_split, validation_size, SyntheticProcess};
use crate::error::Result;
use crate::learner::TrainOptions;
use crate::rng::{derive_seed, rng_from_seed};

/// Synthetic variant of the cloned-classifier experiment: ten nodes from a
/// per-class principal-direction split, six of them replaced by one shared
/// majority vote before the aggregator is fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloneConfig {
    pub process: SyntheticProcess,
    pub n_train: usize,
    pub repetitions: usize,
    /// Empty means every method.
    pub methods: Vec<Method>,
    pub seed: u64,
    pub ci: CiSettings,
    pub val_fraction: f64,
    pub grid_points: usize,
    pub noise_std: Option<f64>,
    pub optimizer: TrainOptions,
}

impl CloneConfig {
    pub fn new(process: SyntheticProcess, n_train: usize) -> Self {
        Self {
            process,
            n_train,
            repetitions: 20,
            methods: Vec::new(),
            seed: 0,
            ci: CiSettings::default(),
            val_fraction: 0.1,
            grid_points: super::DEFAULT_GRID_POINTS,
            noise_std: None,
            optimizer: TrainOptions::default(),
        }
    }
}

fn repetition(cfg: &CloneConfig, methods: &[Method], grid: &[f64], seed: u64) -> Result<RunOutcome> {
    let noise = cfg.noise_std.unwrap_or(cfg.process.default_noise());
    let train = cfg.process.sample(cfg.n_train, noise, &mut rng_from_seed(derive_seed(seed, "train", 0)))?;
    let plan = pca_class_split(&train, CLONE_POOL, derive_seed(seed, "pca", 0))?;
    let delco_cfg = DelcoConfig {
        n_val: validation_size(cfg.n_train, cfg.val_fraction)?,
        grid: grid.to_vec(),
        retrain: false,
        optimizer: cfg.optimizer,
        seed: derive_seed(seed, "val", 0),
    };
    let fit = fit_delco_detailed(&train, &plan, &delco_cfg)?;
    let originals: Vec<BaseModel> = fit.first_pass.into_iter().map(BaseModel::Linear).collect();
    let cloned = majority_vote_clone_setup(&originals, &draw_clone_members(derive_seed(seed, "clones", 0)))?;
    let (delco, outcome, _) = fit_aggregator(cloned.clone(), &fit.validation, grid)?;
    let fitted = FittedMethods::fit(cloned.clone(), cloned, &fit.validation, delco, &train, methods, &cfg.optimizer)?;
    let test = TestSource::Stream { process: cfg.process, noise_std: noise, seed, ci: cfg.ci };
    let eval = fitted.evaluate(methods, &test)?;
    Ok(RunOutcome {
        accuracies: eval.accuracies,
        lambda_hat: outcome.lambda_hat,
        lambda_uncloned: Some(fit.grid_search.lambda_hat),
        bytes: None,
    })
}

pub fn run_clone_experiment(cfg: &CloneConfig) -> Result<ExperimentReport> {
    let methods = normalize_methods(&cfg.methods);
    let grid = lambda_grid(CLONE_POOL, cfg.grid_points)?;
    let outcomes = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(cfg.seed, "clone-repetition", rep as u64);
            wrap_rep(seed, repetition(cfg, &methods, &grid, seed))
        })
        .collect::<Result<Vec<_>>>()?;
    let name = format!("{} clones (n_train={})", cfg.process, cfg.n_train);
    Ok(assemble(&name, serde_json::to_value(cfg).expect("config serializes"), &methods, &outcomes, true))
}
