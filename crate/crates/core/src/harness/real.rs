use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{normalize_methods, wrap_rep, ExperimentReport, FittedMethods, Method, NetworkTotals, TestSource};
use crate::aggregation::{fit_aggregator, fit_delco_detailed, DelcoConfig};
use crate::baselines::{majority_vote_clone_setup, BaseModel, CLONE_COUNT, CLONE_POOL};
use crate::copula::lambda_grid;
use crate::data::{pca_class_split, validation_size, LabeledDataset, PartitionPlan};
use crate::error::{Error, Result};
use crate::learner::{train_logreg, TrainOptions};
use crate::network::{local_splits, predicted_load, run_protocol_detailed, ProtocolConfig};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealConfig {
    /// Dataset name echoed in the report.
    pub name: String,
    pub m: usize,
    pub shuffles: usize,
    /// Empty means every method.
    pub methods: Vec<Method>,
    pub seed: u64,
    pub val_fraction: f64,
    pub grid_points: usize,
    pub optimizer: TrainOptions,
    /// Replace six of the ten classifiers by one shared majority vote.
    pub clone: bool,
}

impl RealConfig {
    /// Desk-scale defaults: 10 nodes, 5 shuffles of 2-fold cross validation.
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            m: 10,
            shuffles: 5,
            methods: Vec::new(),
            seed: 0,
            val_fraction: 0.1,
            grid_points: super::DEFAULT_GRID_POINTS,
            optimizer: TrainOptions::default(),
            clone: false,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct RunOutcome {
    pub accuracies: BTreeMap<Method, f64>,
    pub lambda_hat: f64,
    /// `λ̂` fitted on the same classifiers before cloning.
    pub lambda_uncloned: Option<f64>,
    pub bytes: Option<(u64, u64)>,
}

/// Six distinct positions out of ten.
pub(crate) fn draw_clone_members(seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..CLONE_POOL).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let mut out = idx[..CLONE_COUNT].to_vec();
    out.sort_unstable();
    out
}

fn fold_run(
    train: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &RealConfig,
    methods: &[Method],
    grid: &[f64],
    seed: u64,
) -> Result<RunOutcome> {
    if cfg.m == 1 {
        let plan = PartitionPlan::new(vec![0; train.len()], 1)?;
        let delco_cfg = DelcoConfig {
            n_val: validation_size(train.len(), cfg.val_fraction)?,
            grid: vec![0.0],
            retrain: false,
            optimizer: cfg.optimizer,
            seed: derive_seed(seed, "val", 0),
        };
        let fit = fit_delco_detailed(train, &plan, &delco_cfg)?;
        let bases: Vec<BaseModel> = fit.first_pass.into_iter().map(BaseModel::Linear).collect();
        let fitted =
            FittedMethods::fit(bases.clone(), bases, &fit.validation, fit.ensemble, train, methods, &cfg.optimizer)?;
        let eval = fitted.evaluate(methods, &TestSource::Fixed(test))?;
        return Ok(RunOutcome { accuracies: eval.accuracies, lambda_hat: 0.0, lambda_uncloned: None, bytes: None });
    }

    let plan = pca_class_split(train, cfg.m, derive_seed(seed, "pca", 0))?;
    let nodes = plan.node_datasets(train)?;
    let pcfg = ProtocolConfig {
        val_fraction: cfg.val_fraction,
        grid: Some(grid.to_vec()),
        optimizer: cfg.optimizer,
        seed: derive_seed(seed, "protocol", 0),
    };
    let (bases, validation, delco, lambda_uncloned, bytes) = if cfg.clone {
        let splits = local_splits(&nodes, &pcfg)?;
        let originals = splits
            .par_iter()
            .map(|(t, _)| train_logreg(t, &cfg.optimizer).map(BaseModel::Linear))
            .collect::<Result<Vec<_>>>()?;
        let vals: Vec<&LabeledDataset> = splits.iter().map(|(_, v)| v).collect();
        let validation = LabeledDataset::concat(&vals)?;
        let (_, plain, _) = fit_aggregator(originals.clone(), &validation, grid)?;
        let cloned = majority_vote_clone_setup(&originals, &draw_clone_members(derive_seed(seed, "clones", 0)))?;
        let (delco, _, _) = fit_aggregator(cloned.clone(), &validation, grid)?;
        (cloned, validation, delco, Some(plain.lambda_hat), None)
    } else {
        let out = run_protocol_detailed(&nodes, &pcfg)?;
        let vals: Vec<&LabeledDataset> = out.splits.iter().map(|(_, v)| v).collect();
        let validation = LabeledDataset::concat(&vals)?;
        let predicted = predicted_load(cfg.m, train.dim(), train.num_classes(), grid.len());
        let bytes = (out.trace.total_bytes() as u64, predicted as u64);
        (out.ensemble.classifiers().to_vec(), validation, out.ensemble, None, Some(bytes))
    };
    let lambda_hat = delco.lambda_hat();
    let fitted = FittedMethods::fit(bases.clone(), bases, &validation, delco, train, methods, &cfg.optimizer)?;
    let eval = fitted.evaluate(methods, &TestSource::Fixed(test))?;
    Ok(RunOutcome { accuracies: eval.accuracies, lambda_hat, lambda_uncloned, bytes })
}

/// Shuffled 2-fold cross validation; every fold result counts as one sample.
pub fn run_real_experiment(data: &LabeledDataset, cfg: &RealConfig) -> Result<ExperimentReport> {
    if cfg.m == 0 {
        return Err(Error::InvalidArgument("need at least one node".into()));
    }
    if cfg.clone && cfg.m != CLONE_POOL {
        return Err(Error::InvalidArgument(format!("the clone experiment needs m = {CLONE_POOL}")));
    }
    if data.len() < 2 {
        return Err(Error::InvalidDataset("cross validation needs at least 2 rows".into()));
    }
    let methods = normalize_methods(&cfg.methods);
    let grid = if cfg.m >= 2 { lambda_grid(cfg.m, cfg.grid_points)? } else { vec![0.0] };
    let jobs: Vec<(usize, usize)> = (0..cfg.shuffles).flat_map(|s| [(s, 0), (s, 1)]).collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(shuffle, fold)| {
            let seed = derive_seed(cfg.seed, "shuffle", shuffle as u64);
            let mut perm: Vec<usize> = (0..data.len()).collect();
            perm.shuffle(&mut rng_from_seed(seed));
            let (a, b) = perm.split_at(data.len() / 2);
            let (mut tr, mut te) = if fold == 0 { (a.to_vec(), b.to_vec()) } else { (b.to_vec(), a.to_vec()) };
            tr.sort_unstable();
            te.sort_unstable();
            let fold_seed = derive_seed(seed, "fold", fold as u64);
            wrap_rep(fold_seed, fold_run(&data.subset(&tr), &data.subset(&te), cfg, &methods, &grid, fold_seed))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(&cfg.name, serde_json::to_value(cfg).expect("config serializes"), &methods, &outcomes, cfg.clone))
}

pub(crate) fn assemble(
    name: &str,
    config: serde_json::Value,
    methods: &[Method],
    outcomes: &[RunOutcome],
    clone: bool,
) -> ExperimentReport {
    let runs: Vec<_> = outcomes.iter().map(|o| o.accuracies.clone()).collect();
    let title = format!("{name} ({} runs{})", runs.len(), if clone { ", 6 cloned classifiers" } else { "" });
    let mut report = ExperimentReport::from_samples(title, config, methods, &runs);
    let lambdas: Vec<f64> = outcomes.iter().map(|o| o.lambda_hat).collect();
    report.diagnostics.insert("lambda_hat".into(), serde_json::json!(lambdas));
    let uncloned: Vec<f64> = outcomes.iter().filter_map(|o| o.lambda_uncloned).collect();
    if !uncloned.is_empty() {
        let larger = lambdas.iter().zip(&uncloned).filter(|(c, u)| c > u).count();
        report.diagnostics.insert("lambda_hat_uncloned".into(), serde_json::json!(uncloned));
        report.diagnostics.insert("lambda_larger_when_cloned".into(), serde_json::json!(larger));
    }
    let bytes: Vec<(u64, u64)> = outcomes.iter().filter_map(|o| o.bytes).collect();
    if !bytes.is_empty() {
        let total: u64 = bytes.iter().map(|b| b.0).sum();
        report.network = Some(NetworkTotals {
            runs: bytes.len(),
            total_bytes: total,
            predicted_bytes: bytes.iter().map(|b| b.1).sum(),
            bytes_per_run: total as f64 / bytes.len() as f64,
        });
    }
    report
}
