//! Experiment loops and the statistics behind them.

mod clone;
mod real;
mod report;
mod stats;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregation::CopulaEnsemble;
use crate::baselines::{
    accuracy, classifier_selection, correct_count, BaseModel, Classify, StackedEnsemble, StackingEncoding,
    WeightedVoteEnsemble,
};
use crate::data::{LabeledDataset, SyntheticProcess};
use crate::error::{Error, Result};
use crate::learner::{train_logreg, LinearClassifier, TrainOptions};
use crate::rng::{derive_seed, rng_from_seed};

pub use clone::{run_clone_experiment, CloneConfig};
pub use real::{run_real_experiment, RealConfig};
pub use report::{ExperimentReport, MethodSummary, NetworkTotals};
pub use stats::{
    beta_quantile, clopper_pearson, eval_until_ci, mean_std, regularized_incomplete_beta, AccuracyEstimate,
    CiSettings, StopReason, QUANTILE_TOL,
};
pub use synthetic::{run_synthetic_experiment, SyntheticConfig};

/// Grid size used by every experiment unless configured otherwise.
pub const DEFAULT_GRID_POINTS: usize = 101;

/// Rows of the benchmark tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClassifierSelection,
    /// Picks the base classifier by test accuracy, so it is a reference only.
    BestClassifier,
    WeightedVote,
    Stacking,
    IndependentCopula,
    Delco,
    Centralized,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::ClassifierSelection,
        Method::BestClassifier,
        Method::WeightedVote,
        Method::Stacking,
        Method::IndependentCopula,
        Method::Delco,
        Method::Centralized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ClassifierSelection => "classifier-selection",
            Method::BestClassifier => "best-classifier",
            Method::WeightedVote => "weighted-vote",
            Method::Stacking => "stacking",
            Method::IndependentCopula => "independent-copula",
            Method::Delco => "delco",
            Method::Centralized => "centralized",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::ClassifierSelection => "Clf. Selection",
            Method::BestClassifier => "Best Clf. (oracle)",
            Method::WeightedVote => "Weighted Vote",
            Method::Stacking => "Stacking",
            Method::IndependentCopula => "Indep. Copula",
            Method::Delco => "DELCO",
            Method::Centralized => "Centralized Clf.",
        }
    }

    pub fn is_oracle(self) -> bool {
        self == Method::BestClassifier
    }

    fn needs_bases(self) -> bool {
        matches!(self, Method::ClassifierSelection | Method::BestClassifier)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// Every combiner of one run, built from the same base classifiers.
pub(crate) struct FittedMethods {
    bases: Vec<BaseModel>,
    selected: usize,
    weighted: Option<WeightedVoteEnsemble>,
    stacked: Option<StackedEnsemble>,
    delco: CopulaEnsemble,
    independent: CopulaEnsemble,
    centralized: Option<LinearClassifier>,
}

impl FittedMethods {
    /// Validation-derived choices (selection, vote weights, second stage)
    /// come from `first_pass`; predictions use `deployed`, which is either
    /// the same classifiers or their retrained versions.
    pub(crate) fn fit(
        first_pass: Vec<BaseModel>,
        deployed: Vec<BaseModel>,
        validation: &LabeledDataset,
        delco: CopulaEnsemble,
        full_train: &LabeledDataset,
        methods: &[Method],
        optimizer: &TrainOptions,
    ) -> Result<Self> {
        let selected = classifier_selection(&first_pass, validation)?;
        let weighted = if methods.contains(&Method::WeightedVote) {
            Some(WeightedVoteEnsemble::fit(first_pass.clone(), validation)?.with_classifiers(deployed.clone())?)
        } else {
            None
        };
        let stacked = if methods.contains(&Method::Stacking) {
            let s = StackedEnsemble::fit(first_pass, validation, StackingEncoding::RawIndex, optimizer)?;
            Some(s.with_classifiers(deployed.clone())?)
        } else {
            None
        };
        let centralized =
            if methods.contains(&Method::Centralized) { Some(train_logreg(full_train, optimizer)?) } else { None };
        let independent = delco.with_lambda(0.0)?;
        Ok(Self { bases: deployed, selected, weighted, stacked, delco, independent, centralized })
    }

    fn classifier(&self, method: Method) -> Option<&(dyn Classify + Sync)> {
        match method {
            Method::WeightedVote => self.weighted.as_ref().map(|c| c as _),
            Method::Stacking => self.stacked.as_ref().map(|c| c as _),
            Method::IndependentCopula => Some(&self.independent),
            Method::Delco => Some(&self.delco),
            Method::Centralized => self.centralized.as_ref().map(|c| c as _),
            Method::ClassifierSelection | Method::BestClassifier => None,
        }
    }

    /// Test accuracy of every requested method. Selection and best
    /// classifier read off the per-classifier accuracies.
    pub(crate) fn evaluate(&self, methods: &[Method], test: &TestSource<'_>) -> Result<Evaluation> {
        let mut out = Evaluation::default();
        let mut measure = |clf: &(dyn Classify + Sync), stream: u64| -> Result<f64> {
            match test {
                TestSource::Fixed(data) => accuracy(clf, data),
                TestSource::Stream { process, noise_std, seed, ci } => {
                    let mut rng = rng_from_seed(derive_seed(*seed, "test", stream));
                    let est = eval_until_ci(ci, |k| {
                        let batch = process.sample(k, *noise_std, &mut rng)?;
                        correct_count(clf, &batch)
                    })?;
                    out.cap_stops += usize::from(est.stop == StopReason::CapReached);
                    Ok(est.point)
                }
            }
        };
        let mut base_acc = Vec::new();
        if methods.iter().any(|m| m.needs_bases()) {
            for (k, b) in self.bases.iter().enumerate() {
                base_acc.push(measure(b, 100 + k as u64)?);
            }
        }
        for (i, &method) in methods.iter().enumerate() {
            let acc = match method {
                Method::ClassifierSelection => base_acc[self.selected],
                Method::BestClassifier => base_acc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                _ => {
                    let clf = self.classifier(method).expect("requested methods are fitted");
                    measure(clf, i as u64)?
                }
            };
            out.accuracies.insert(method, acc);
        }
        out.base_accuracies = base_acc;
        Ok(out)
    }
}

pub(crate) enum TestSource<'a> {
    Fixed(&'a LabeledDataset),
    Stream { process: SyntheticProcess, noise_std: f64, seed: u64, ci: CiSettings },
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Evaluation {
    pub accuracies: BTreeMap<Method, f64>,
    pub base_accuracies: Vec<f64>,
    pub cap_stops: usize,
}

/// Canonical order, duplicates removed; an empty request means every method.
pub(crate) fn normalize_methods(methods: &[Method]) -> Vec<Method> {
    if methods.is_empty() {
        return Method::ALL.to_vec();
    }
    Method::ALL.into_iter().filter(|m| methods.contains(m)).collect()
}

pub(crate) fn wrap_rep<T>(seed: u64, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Repetition { seed, source: Box::new(e) })
}
