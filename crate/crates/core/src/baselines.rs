//! Reference combiners and the shared classifier interface.

use std::sync::Arc;

use crate::aggregation::{CopulaEnsemble, PredictionMatrix};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::learner::{argmax, train_logreg, LinearClassifier, TrainOptions};

pub trait Classify {
    fn num_classes(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn predict(&self, x: &[f64]) -> Result<usize>;
}

impl Classify for LinearClassifier {
    fn num_classes(&self) -> usize {
        LinearClassifier::num_classes(self)
    }
    fn input_dim(&self) -> usize {
        LinearClassifier::input_dim(self)
    }
    fn predict(&self, x: &[f64]) -> Result<usize> {
        LinearClassifier::predict(self, x)
    }
}

impl<C: Classify + ?Sized> Classify for &C {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn predict(&self, x: &[f64]) -> Result<usize> {
        (**self).predict(x)
    }
}

/// A base classifier slot of an ensemble. Clone slots share one combiner.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseModel {
    Linear(LinearClassifier),
    MajorityVote(Arc<MajorityVote>),
}

impl From<LinearClassifier> for BaseModel {
    fn from(c: LinearClassifier) -> Self {
        BaseModel::Linear(c)
    }
}

impl Classify for BaseModel {
    fn num_classes(&self) -> usize {
        match self {
            BaseModel::Linear(c) => c.num_classes(),
            BaseModel::MajorityVote(v) => v.num_classes(),
        }
    }
    fn input_dim(&self) -> usize {
        match self {
            BaseModel::Linear(c) => c.input_dim(),
            BaseModel::MajorityVote(v) => v.input_dim(),
        }
    }
    fn predict(&self, x: &[f64]) -> Result<usize> {
        match self {
            BaseModel::Linear(c) => c.predict(x),
            BaseModel::MajorityVote(v) => v.predict(x),
        }
    }
}

impl Classify for CopulaEnsemble {
    fn num_classes(&self) -> usize {
        self.model().num_classes()
    }
    fn input_dim(&self) -> usize {
        self.classifiers()[0].input_dim()
    }
    fn predict(&self, x: &[f64]) -> Result<usize> {
        self.predict_votes(&self.votes(x)?)
    }
}

fn common_shape<C: Classify>(classifiers: &[C]) -> Result<(usize, usize)> {
    let first = classifiers
        .first()
        .ok_or_else(|| Error::InvalidArgument("at least one classifier is required".into()))?;
    let (l, d) = (first.num_classes(), first.input_dim());
    for c in classifiers {
        if c.num_classes() != l {
            return Err(Error::DimensionMismatch { expected: l, found: c.num_classes() });
        }
        if c.input_dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: c.input_dim() });
        }
    }
    Ok((l, d))
}

pub fn correct_count<C: Classify + ?Sized>(clf: &C, data: &LabeledDataset) -> Result<u64> {
    let mut hits = 0;
    for (x, y) in data.rows() {
        hits += u64::from(clf.predict(x)? == y);
    }
    Ok(hits)
}

/// Fraction of rows classified correctly; an empty set is rejected.
pub fn accuracy<C: Classify + ?Sized>(clf: &C, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(correct_count(clf, data)? as f64 / data.len() as f64)
}

/// Index of the most accurate classifier on `data`; ties go to the lowest index.
fn most_accurate<C: Classify>(classifiers: &[C], data: &LabeledDataset) -> Result<usize> {
    common_shape(classifiers)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut best = (0, 0);
    for (k, c) in classifiers.iter().enumerate() {
        let hits = correct_count(c, data)?;
        if k == 0 || hits > best.1 {
            best = (k, hits);
        }
    }
    Ok(best.0)
}

/// Classifier chosen by validation accuracy.
pub fn classifier_selection<C: Classify>(classifiers: &[C], val: &LabeledDataset) -> Result<usize> {
    most_accurate(classifiers, val)
}

/// Classifier with the highest test accuracy. It looks at the test labels,
/// so it is a reference value only.
pub fn best_classifier<C: Classify>(classifiers: &[C], test: &LabeledDataset) -> Result<usize> {
    most_accurate(classifiers, test)
}

/// Class with the largest total weight among the votes; lowest class wins ties.
pub fn weighted_tally(votes: &[usize], weights: &[f64], num_classes: usize) -> usize {
    let mut tally = vec![0.0; num_classes];
    for (&j, &w) in votes.iter().zip(weights) {
        tally[j] += w;
    }
    argmax(&tally)
}

/// Unweighted vote over a fixed set of members.
#[derive(Debug, Clone, PartialEq)]
pub struct MajorityVote {
    members: Vec<BaseModel>,
    num_classes: usize,
    input_dim: usize,
}

impl MajorityVote {
    pub fn new(members: Vec<BaseModel>) -> Result<Self> {
        let (num_classes, input_dim) = common_shape(&members)?;
        Ok(Self { members, num_classes, input_dim })
    }

    pub fn members(&self) -> &[BaseModel] {
        &self.members
    }
}

impl Classify for MajorityVote {
    fn num_classes(&self) -> usize {
        self.num_classes
    }
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn predict(&self, x: &[f64]) -> Result<usize> {
        let mut tally = vec![0u32; self.num_classes];
        for m in &self.members {
            tally[m.predict(x)?] += 1;
        }
        let mut best = 0;
        for (j, &t) in tally.iter().enumerate() {
            if t > tally[best] {
                best = j;
            }
        }
        Ok(best)
    }
}

pub const CLONE_POOL: usize = 10;
pub const CLONE_COUNT: usize = 6;

/// Replaces the `clone_members` positions of ten classifiers by one shared
/// majority vote over the classifiers originally at those positions.
pub fn majority_vote_clone_setup(classifiers: &[BaseModel], clone_members: &[usize]) -> Result<Vec<BaseModel>> {
    if classifiers.len() != CLONE_POOL {
        return Err(Error::InvalidArgument(format!(
            "clone setup needs {CLONE_POOL} classifiers, got {}",
            classifiers.len()
        )));
    }
    let mut seen = [false; CLONE_POOL];
    for &k in clone_members {
        if k >= CLONE_POOL || std::mem::replace(&mut seen[k], true) {
            return Err(Error::InvalidArgument(format!("bad clone member {k}")));
        }
    }
    if clone_members.len() != CLONE_COUNT {
        return Err(Error::InvalidArgument(format!(
            "clone setup needs {CLONE_COUNT} members, got {}",
            clone_members.len()
        )));
    }
    let mut sorted = clone_members.to_vec();
    sorted.sort_unstable();
    let vote = Arc::new(MajorityVote::new(sorted.iter().map(|&k| classifiers[k].clone()).collect())?);
    Ok(classifiers
        .iter()
        .enumerate()
        .map(|(k, c)| if seen[k] { BaseModel::MajorityVote(Arc::clone(&vote)) } else { c.clone() })
        .collect())
}

/// Votes weighted by each classifier's validation accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedVoteEnsemble {
    classifiers: Vec<BaseModel>,
    weights: Vec<f64>,
    num_classes: usize,
}

impl WeightedVoteEnsemble {
    pub fn fit(classifiers: Vec<BaseModel>, val: &LabeledDataset) -> Result<Self> {
        let weights = classifiers.iter().map(|c| accuracy(c, val)).collect::<Result<Vec<_>>>()?;
        Self::with_weights(classifiers, weights)
    }

    pub fn with_weights(classifiers: Vec<BaseModel>, weights: Vec<f64>) -> Result<Self> {
        let (num_classes, _) = common_shape(&classifiers)?;
        if weights.len() != classifiers.len() {
            return Err(Error::DimensionMismatch { expected: classifiers.len(), found: weights.len() });
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::InvalidArgument("vote weights must lie in [0, 1]".into()));
        }
        Ok(Self { classifiers, weights, num_classes })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Same weights applied to other classifiers (e.g. retrained ones).
    pub fn with_classifiers(&self, classifiers: Vec<BaseModel>) -> Result<Self> {
        Self::with_weights(classifiers, self.weights.clone())
    }

    pub fn predict_votes(&self, z: &[usize]) -> usize {
        weighted_tally(z, &self.weights, self.num_classes)
    }
}

impl Classify for WeightedVoteEnsemble {
    fn num_classes(&self) -> usize {
        self.num_classes
    }
    fn input_dim(&self) -> usize {
        self.classifiers[0].input_dim()
    }
    fn predict(&self, x: &[f64]) -> Result<usize> {
        let z = self.classifiers.iter().map(|c| c.predict(x)).collect::<Result<Vec<_>>>()?;
        Ok(self.predict_votes(&z))
    }
}

/// How base votes are turned into second-stage features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StackingEncoding {
    /// One numeric feature per classifier holding its class index.
    #[default]
    RawIndex,
    /// `ℓ` indicator features per classifier.
    OneHot,
}

impl StackingEncoding {
    pub fn width(self, m: usize, num_classes: usize) -> usize {
        match self {
            StackingEncoding::RawIndex => m,
            StackingEncoding::OneHot => m * num_classes,
        }
    }

    pub fn encode(self, z: &[usize], num_classes: usize) -> Vec<f64> {
        match self {
            StackingEncoding::RawIndex => z.iter().map(|&j| j as f64).collect(),
            StackingEncoding::OneHot => {
                let mut out = vec![0.0; z.len() * num_classes];
                for (k, &j) in z.iter().enumerate() {
                    out[k * num_classes + j] = 1.0;
                }
                out
            }
        }
    }
}

/// Logistic regression trained on the base classifiers' votes.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedEnsemble {
    classifiers: Vec<BaseModel>,
    second_stage: LinearClassifier,
    encoding: StackingEncoding,
}

impl StackedEnsemble {
    pub fn fit(
        classifiers: Vec<BaseModel>,
        val: &LabeledDataset,
        encoding: StackingEncoding,
        opts: &TrainOptions,
    ) -> Result<Self> {
        let (l, _) = common_shape(&classifiers)?;
        if val.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let preds = PredictionMatrix::from_classifiers(&classifiers, val)?;
        let second = Self::second_stage_data(&preds, val.labels(), l, encoding)?;
        let second_stage = train_logreg(&second, opts)?;
        Ok(Self { classifiers, second_stage, encoding })
    }

    /// Vote features and labels the second stage is trained on.
    pub fn second_stage_data(
        preds: &PredictionMatrix,
        labels: &[usize],
        num_classes: usize,
        encoding: StackingEncoding,
    ) -> Result<LabeledDataset> {
        let width = encoding.width(preds.num_classifiers(), num_classes);
        let features = preds.rows().flat_map(|z| encoding.encode(z, num_classes)).collect();
        LabeledDataset::new(features, width, labels.to_vec(), num_classes)
    }

    /// Rebuilds a stacked ensemble from stored parts.
    pub fn from_parts(
        classifiers: Vec<BaseModel>,
        second_stage: LinearClassifier,
        encoding: StackingEncoding,
    ) -> Result<Self> {
        let (l, _) = common_shape(&classifiers)?;
        if second_stage.num_classes() != l {
            return Err(Error::DimensionMismatch { expected: l, found: second_stage.num_classes() });
        }
        let width = encoding.width(classifiers.len(), l);
        if second_stage.input_dim() != width {
            return Err(Error::DimensionMismatch { expected: width, found: second_stage.input_dim() });
        }
        Ok(Self { classifiers, second_stage, encoding })
    }

    /// Same second stage on top of other classifiers (e.g. retrained ones).
    pub fn with_classifiers(&self, classifiers: Vec<BaseModel>) -> Result<Self> {
        let (l, _) = common_shape(&classifiers)?;
        if classifiers.len() != self.classifiers.len() || l != self.second_stage.num_classes() {
            return Err(Error::DimensionMismatch { expected: self.classifiers.len(), found: classifiers.len() });
        }
        Ok(Self { classifiers, second_stage: self.second_stage.clone(), encoding: self.encoding })
    }

    pub fn second_stage(&self) -> &LinearClassifier {
        &self.second_stage
    }

    pub fn encoding(&self) -> StackingEncoding {
        self.encoding
    }

    pub fn predict_votes(&self, z: &[usize]) -> Result<usize> {
        self.second_stage.predict(&self.encoding.encode(z, self.second_stage.num_classes()))
    }
}

impl Classify for StackedEnsemble {
    fn num_classes(&self) -> usize {
        self.second_stage.num_classes()
    }
    fn input_dim(&self) -> usize {
        self.classifiers[0].input_dim()
    }
    fn predict(&self, x: &[f64]) -> Result<usize> {
        let z = self.classifiers.iter().map(|c| c.predict(x)).collect::<Result<Vec<_>>>()?;
        self.predict_votes(&z)
    }
}

/// One classifier trained on the undivided training set.
pub fn centralized_train(full_train: &LabeledDataset, opts: &TrainOptions) -> Result<LinearClassifier> {
    train_logreg(full_train, opts)
}
