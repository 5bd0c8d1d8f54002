//! The probabilistic aggregator.
//!
//! Given the class votes `z = (ĉ_1(x), …, ĉ_m(x))` of `m` base classifiers,
//! the ensemble picks the class maximizing
//!
//! ```text
//! ln γ_y + Σ_k ln θ_k[y][z_k] + ln c_λ(F_{1,y}(z_1), …, F_{m,y}(z_m))
//! ```
//!
//! where `γ` and `θ` are add-one smoothed validation frequencies, `F` are the
//! cumulative sums of `θ` and `c_λ` is the equicorrelation Gaussian copula
//! density. `λ = 0` recovers the conditionally independent model.

use rayon::prelude::*;

use crate::baselines::{BaseModel, Classify};
use crate::codec::{Reader, Writer, WORD};
use crate::copula::{clamped_normal_score, EquicorrelationCopula};
use crate::data::{validation_split, LabeledDataset, PartitionPlan};
use crate::error::{Error, Result};
use crate::learner::{argmax, train_logreg, LinearClassifier, TrainOptions};

/// Class votes of `m` classifiers on a sequence of examples (row-major).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionMatrix {
    values: Vec<usize>,
    num_classifiers: usize,
}

impl PredictionMatrix {
    pub fn new(values: Vec<usize>, num_classifiers: usize) -> Result<Self> {
        if num_classifiers == 0 {
            return Err(Error::InvalidArgument("prediction matrix needs at least one classifier".into()));
        }
        if values.len() % num_classifiers != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} votes do not form rows of {num_classifiers}",
                values.len()
            )));
        }
        Ok(Self { values, num_classifiers })
    }

    pub fn from_rows(rows: &[Vec<usize>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != m) {
            return Err(Error::DimensionMismatch { expected: m, found: r.len() });
        }
        Self::new(rows.concat(), m)
    }

    /// Votes of every classifier on every row of `data`.
    pub fn from_classifiers<C: Classify + Sync>(classifiers: &[C], data: &LabeledDataset) -> Result<Self> {
        let values = data
            .rows()
            .map(|(x, _)| classifiers.iter().map(|c| c.predict(x)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?
            .concat();
        Self::new(values, classifiers.len())
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.num_classifiers
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_classifiers(&self) -> usize {
        self.num_classifiers
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.values[i * self.num_classifiers..(i + 1) * self.num_classifiers]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, usize> {
        self.values.chunks_exact(self.num_classifiers)
    }

    pub fn column(&self, k: usize) -> Vec<usize> {
        self.rows().map(|r| r[k]).collect()
    }
}

/// Raw validation tallies: per-class counts and one confusion matrix per
/// classifier (`[k][true class][predicted class]`). Tallies from disjoint
/// validation sets add up to the tally of their union.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputCounts {
    num_classifiers: usize,
    num_classes: usize,
    class_counts: Vec<u64>,
    confusion: Vec<u64>,
}

impl OutputCounts {
    pub fn zeros(num_classifiers: usize, num_classes: usize) -> Self {
        Self {
            num_classifiers,
            num_classes,
            class_counts: vec![0; num_classes],
            confusion: vec![0; num_classifiers * num_classes * num_classes],
        }
    }

    pub fn from_predictions(predictions: &PredictionMatrix, labels: &[usize], num_classes: usize) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: labels.len(), found: predictions.len() });
        }
        let m = predictions.num_classifiers();
        let mut out = Self::zeros(m, num_classes);
        for (z, &y) in predictions.rows().zip(labels) {
            if y >= num_classes {
                return Err(Error::InvalidArgument(format!("label {y} outside 0..{num_classes}")));
            }
            out.class_counts[y] += 1;
            for (k, &j) in z.iter().enumerate() {
                if j >= num_classes {
                    return Err(Error::InvalidArgument(format!("vote {j} outside 0..{num_classes}")));
                }
                out.confusion[(k * num_classes + y) * num_classes + j] += 1;
            }
        }
        Ok(out)
    }

    pub fn from_parts(class_counts: Vec<u64>, confusion: Vec<u64>, num_classifiers: usize) -> Result<Self> {
        let l = class_counts.len();
        if confusion.len() != num_classifiers * l * l {
            return Err(Error::DimensionMismatch { expected: num_classifiers * l * l, found: confusion.len() });
        }
        Ok(Self { num_classifiers, num_classes: l, class_counts, confusion })
    }

    pub fn merge(&mut self, other: &OutputCounts) -> Result<()> {
        if (self.num_classifiers, self.num_classes) != (other.num_classifiers, other.num_classes) {
            return Err(Error::InvalidArgument("cannot merge tallies of different shapes".into()));
        }
        for (a, b) in self.class_counts.iter_mut().zip(&other.class_counts) {
            *a += b;
        }
        for (a, b) in self.confusion.iter_mut().zip(&other.confusion) {
            *a += b;
        }
        Ok(())
    }

    pub fn num_classifiers(&self) -> usize {
        self.num_classifiers
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_counts(&self) -> &[u64] {
        &self.class_counts
    }

    pub fn confusion(&self) -> &[u64] {
        &self.confusion
    }

    /// `ℓ × ℓ` confusion matrix of classifier `k`.
    pub fn confusion_matrix(&self, k: usize) -> &[u64] {
        let l2 = self.num_classes * self.num_classes;
        &self.confusion[k * l2..(k + 1) * l2]
    }

    pub fn total(&self) -> u64 {
        self.class_counts.iter().sum()
    }
}

/// Smoothed class prior `γ`, conditional vote distributions `θ` and their
/// cumulatives `F`, for `m` classifiers over `ℓ` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputModel {
    num_classifiers: usize,
    num_classes: usize,
    gamma: Vec<f64>,
    theta: Vec<f64>,
    cumulative: Vec<f64>,
}

impl OutputModel {
    /// Laplace add-one smoothing of validation tallies.
    pub fn from_counts(counts: &OutputCounts) -> Self {
        let l = counts.num_classes;
        let n_val: u64 = counts.total();
        let gamma = counts
            .class_counts
            .iter()
            .map(|&c| (1 + c) as f64 / (l as u64 + n_val) as f64)
            .collect();
        let mut theta = vec![0.0; counts.confusion.len()];
        for k in 0..counts.num_classifiers {
            for y in 0..l {
                let denom = (l as u64 + counts.class_counts[y]) as f64;
                let base = (k * l + y) * l;
                for j in 0..l {
                    theta[base + j] = (1 + counts.confusion[base + j]) as f64 / denom;
                }
            }
        }
        Self::assemble(counts.num_classifiers, l, gamma, theta)
    }

    /// Rebuilds a model from transmitted `γ` and `θ`.
    pub fn from_estimates(gamma: Vec<f64>, theta: Vec<f64>, num_classifiers: usize) -> Result<Self> {
        let l = gamma.len();
        if l < 2 {
            return Err(Error::InvalidArgument("output model needs at least 2 classes".into()));
        }
        if theta.len() != num_classifiers * l * l {
            return Err(Error::DimensionMismatch { expected: num_classifiers * l * l, found: theta.len() });
        }
        if gamma.iter().chain(&theta).any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::InvalidArgument("probabilities must lie in (0, 1]".into()));
        }
        Ok(Self::assemble(num_classifiers, l, gamma, theta))
    }

    fn assemble(num_classifiers: usize, num_classes: usize, gamma: Vec<f64>, theta: Vec<f64>) -> Self {
        let mut cumulative = vec![0.0; theta.len()];
        for (f_row, t_row) in cumulative.chunks_exact_mut(num_classes).zip(theta.chunks_exact(num_classes)) {
            let mut acc = 0.0;
            for (f, t) in f_row.iter_mut().zip(t_row) {
                acc += t;
                *f = acc;
            }
        }
        Self { num_classifiers, num_classes, gamma, theta, cumulative }
    }

    pub fn num_classifiers(&self) -> usize {
        self.num_classifiers
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Flat `θ` tensor, indexed `[k][y][j]`.
    pub fn theta_tensor(&self) -> &[f64] {
        &self.theta
    }

    /// `θ_k[y]`: distribution of classifier `k`'s vote given true class `y`.
    pub fn theta(&self, k: usize, y: usize) -> &[f64] {
        let l = self.num_classes;
        &self.theta[(k * l + y) * l..(k * l + y + 1) * l]
    }

    pub fn cumulative(&self, k: usize, y: usize) -> &[f64] {
        let l = self.num_classes;
        &self.cumulative[(k * l + y) * l..(k * l + y + 1) * l]
    }

    fn check_votes(&self, z: &[usize]) -> Result<()> {
        if z.len() != self.num_classifiers {
            return Err(Error::DimensionMismatch { expected: self.num_classifiers, found: z.len() });
        }
        if let Some(&bad) = z.iter().find(|&&j| j >= self.num_classes) {
            return Err(Error::InvalidArgument(format!("vote {bad} outside 0..{}", self.num_classes)));
        }
        Ok(())
    }

    /// Copula for `lambda`, or `None` when a single classifier leaves no dependence to model.
    fn copula(&self, lambda: f64) -> Result<Option<EquicorrelationCopula>> {
        if self.num_classifiers < 2 {
            return Ok(None);
        }
        EquicorrelationCopula::new(lambda, self.num_classifiers).map(Some)
    }
}

pub fn fit_output_model(predictions: &PredictionMatrix, labels: &[usize], num_classes: usize) -> Result<OutputModel> {
    Ok(OutputModel::from_counts(&OutputCounts::from_predictions(predictions, labels, num_classes)?))
}

/// Unnormalized log-posterior of every class given the votes `z`.
pub fn ensemble_log_scores(model: &OutputModel, z: &[usize], lambda: f64) -> Result<Vec<f64>> {
    model.check_votes(z)?;
    let copula = model.copula(lambda)?;
    let mut scores = Vec::with_capacity(model.num_classes);
    let mut v = vec![0.0; z.len()];
    for y in 0..model.num_classes {
        let mut s = model.gamma[y].ln();
        for (k, &j) in z.iter().enumerate() {
            let t = model.theta(k, y)[j].ln();
            if !t.is_finite() {
                return Err(Error::NonFiniteScore { class: y, classifier: Some(k) });
            }
            s += t;
            v[k] = clamped_normal_score(model.cumulative(k, y)[j]);
        }
        if let Some(c) = &copula {
            s += c.log_density_scores(&v).map_err(|_| Error::NonFiniteScore { class: y, classifier: None })?;
        }
        if !s.is_finite() {
            return Err(Error::NonFiniteScore { class: y, classifier: None });
        }
        scores.push(s);
    }
    Ok(scores)
}

/// Logs and normal scores of a fitted model, precomputed for fast scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringTable {
    num_classifiers: usize,
    num_classes: usize,
    log_gamma: Vec<f64>,
    log_theta: Vec<f64>,
    normal_score: Vec<f64>,
}

/// λ-independent pieces of the class scores for one vote vector.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteSummary {
    base: Vec<f64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl VoteSummary {
    fn decide(&self, copula: Option<&EquicorrelationCopula>) -> usize {
        match copula {
            None => argmax(&self.base),
            Some(c) => {
                let mut best = (0, f64::NEG_INFINITY);
                for y in 0..self.base.len() {
                    let s = self.base[y] + c.log_density_from_sums(self.sum[y], self.sum_sq[y]);
                    if s > best.1 {
                        best = (y, s);
                    }
                }
                best.0
            }
        }
    }
}

impl ScoringTable {
    pub fn new(model: &OutputModel) -> Self {
        Self {
            num_classifiers: model.num_classifiers,
            num_classes: model.num_classes,
            log_gamma: model.gamma.iter().map(|g| g.ln()).collect(),
            log_theta: model.theta.iter().map(|t| t.ln()).collect(),
            normal_score: model.cumulative.iter().map(|&f| clamped_normal_score(f)).collect(),
        }
    }

    pub fn summarize(&self, z: &[usize]) -> Result<VoteSummary> {
        let (m, l) = (self.num_classifiers, self.num_classes);
        if z.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: z.len() });
        }
        let mut out = VoteSummary { base: self.log_gamma.clone(), sum: vec![0.0; l], sum_sq: vec![0.0; l] };
        for (k, &j) in z.iter().enumerate() {
            if j >= l {
                return Err(Error::InvalidArgument(format!("vote {j} outside 0..{l}")));
            }
            for y in 0..l {
                let idx = (k * l + y) * l + j;
                out.base[y] += self.log_theta[idx];
                let v = self.normal_score[idx];
                out.sum[y] += v;
                out.sum_sq[y] += v * v;
            }
        }
        Ok(out)
    }

    pub fn log_scores(&self, z: &[usize], copula: Option<&EquicorrelationCopula>) -> Result<Vec<f64>> {
        let s = self.summarize(z)?;
        let scores: Vec<f64> = (0..self.num_classes)
            .map(|y| s.base[y] + copula.map_or(0.0, |c| c.log_density_from_sums(s.sum[y], s.sum_sq[y])))
            .collect();
        if let Some(class) = scores.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteScore { class, classifier: None });
        }
        Ok(scores)
    }

    pub fn decide(&self, z: &[usize], copula: Option<&EquicorrelationCopula>) -> Result<usize> {
        Ok(self.summarize(z)?.decide(copula))
    }
}

/// Validation accuracies of every grid value, as raw correct counts.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchOutcome {
    pub lambda_hat: f64,
    pub grid: Vec<f64>,
    pub correct: Vec<u64>,
    pub total: u64,
}

/// Correct decisions on `(z, y)` pairs for every `λ` of the grid.
pub fn grid_correct_counts(
    model: &OutputModel,
    predictions: &PredictionMatrix,
    labels: &[usize],
    grid: &[f64],
) -> Result<Vec<u64>> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), found: predictions.len() });
    }
    let copulas = grid.iter().map(|&l| model.copula(l)).collect::<Result<Vec<_>>>()?;
    let table = ScoringTable::new(model);
    let summaries = predictions.rows().map(|z| table.summarize(z)).collect::<Result<Vec<_>>>()?;
    Ok(copulas
        .par_iter()
        .map(|c| {
            summaries.iter().zip(labels).filter(|(s, &y)| s.decide(c.as_ref()) == y).count() as u64
        })
        .collect())
}

/// Grid value with the most correct decisions; ties go to the value closest
/// to zero, then to the smaller value.
pub fn select_lambda(grid: &[f64], correct: &[u64]) -> Result<f64> {
    if grid.is_empty() || grid.len() != correct.len() {
        return Err(Error::InvalidArgument("grid search needs a non-empty grid with one count per value".into()));
    }
    let best = (0..grid.len())
        .min_by(|&a, &b| {
            correct[b]
                .cmp(&correct[a])
                .then(grid[a].abs().total_cmp(&grid[b].abs()))
                .then(grid[a].total_cmp(&grid[b]))
        })
        .expect("non-empty grid");
    Ok(grid[best])
}

pub fn grid_search_lambda_detailed(
    model: &OutputModel,
    predictions: &PredictionMatrix,
    labels: &[usize],
    grid: &[f64],
) -> Result<GridSearchOutcome> {
    let correct = grid_correct_counts(model, predictions, labels, grid)?;
    let lambda_hat = select_lambda(grid, &correct)?;
    Ok(GridSearchOutcome { lambda_hat, grid: grid.to_vec(), correct, total: labels.len() as u64 })
}

pub fn grid_search_lambda(
    model: &OutputModel,
    predictions: &PredictionMatrix,
    labels: &[usize],
    grid: &[f64],
) -> Result<f64> {
    Ok(grid_search_lambda_detailed(model, predictions, labels, grid)?.lambda_hat)
}

/// Base classifiers, their output model and the selected copula parameter.
#[derive(Debug, Clone)]
pub struct CopulaEnsemble {
    classifiers: Vec<BaseModel>,
    model: OutputModel,
    lambda_hat: f64,
    table: ScoringTable,
    copula: Option<EquicorrelationCopula>,
}

impl PartialEq for CopulaEnsemble {
    fn eq(&self, other: &Self) -> bool {
        self.classifiers == other.classifiers
            && self.model == other.model
            && self.lambda_hat.to_bits() == other.lambda_hat.to_bits()
    }
}

impl CopulaEnsemble {
    pub fn new(classifiers: Vec<BaseModel>, model: OutputModel, lambda_hat: f64) -> Result<Self> {
        if classifiers.len() != model.num_classifiers {
            return Err(Error::DimensionMismatch { expected: model.num_classifiers, found: classifiers.len() });
        }
        if let Some(c) = classifiers.iter().find(|c| c.num_classes() != model.num_classes) {
            return Err(Error::DimensionMismatch { expected: model.num_classes, found: c.num_classes() });
        }
        let dim = classifiers[0].input_dim();
        if let Some(c) = classifiers.iter().find(|c| c.input_dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: c.input_dim() });
        }
        let lambda_hat = if model.num_classifiers < 2 { 0.0 } else { lambda_hat };
        let copula = model.copula(lambda_hat)?;
        let table = ScoringTable::new(&model);
        Ok(Self { classifiers, model, lambda_hat, table, copula })
    }

    pub fn classifiers(&self) -> &[BaseModel] {
        &self.classifiers
    }

    pub fn model(&self) -> &OutputModel {
        &self.model
    }

    pub fn lambda_hat(&self) -> f64 {
        self.lambda_hat
    }

    pub fn num_classifiers(&self) -> usize {
        self.classifiers.len()
    }

    /// Same classifiers and output model with a different copula parameter.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.classifiers.clone(), self.model.clone(), lambda)
    }

    /// Swaps in new base classifiers, keeping the fitted `γ`, `θ` and `λ̂`.
    pub fn with_classifiers(&self, classifiers: Vec<BaseModel>) -> Result<Self> {
        Self::new(classifiers, self.model.clone(), self.lambda_hat)
    }

    pub fn votes(&self, x: &[f64]) -> Result<Vec<usize>> {
        self.classifiers.iter().map(|c| c.predict(x)).collect()
    }

    pub fn predict_votes(&self, z: &[usize]) -> Result<usize> {
        self.table.decide(z, self.copula.as_ref())
    }

    pub fn log_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.table.log_scores(&self.votes(x)?, self.copula.as_ref())
    }

    /// Header `(m, ℓ, λ̂)`, the `m` model blobs, then `γ` and `θ`.
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        w.usize(self.num_classifiers()).usize(self.model.num_classes).f64(self.lambda_hat);
        for c in &self.classifiers {
            match c {
                BaseModel::Linear(lin) => lin.encode_into(&mut w),
                BaseModel::MajorityVote(_) => {
                    return Err(Error::Unsupported("only linear base models can be encoded".into()))
                }
            }
        }
        w.f64s(&self.model.gamma).f64s(&self.model.theta);
        Ok(w.finish())
    }

    pub fn encoded_len(m: usize, num_classes: usize, input_dim: usize) -> usize {
        3 * WORD + m * LinearClassifier::encoded_len(num_classes, input_dim) + (num_classes + m * num_classes * num_classes) * WORD
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let out = Self::decode_from(&mut r)?;
        r.expect_end()?;
        Ok(out)
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self> {
        let m = r.bounded_count(WORD)?;
        let l = r.bounded_count(WORD)?;
        let lambda = r.f64()?;
        let classifiers = (0..m)
            .map(|_| LinearClassifier::decode_from(r).map(BaseModel::Linear))
            .collect::<Result<Vec<_>>>()?;
        let gamma = r.f64s(l)?;
        let theta_len = m
            .checked_mul(l * l)
            .filter(|n| n * WORD <= r.remaining())
            .ok_or_else(|| Error::Decode("truncated output model".into()))?;
        let theta = r.f64s(theta_len)?;
        let model = OutputModel::from_estimates(gamma, theta, m).map_err(|e| Error::Decode(e.to_string()))?;
        Self::new(classifiers, model, lambda).map_err(|e| Error::Decode(e.to_string()))
    }
}

/// Fits `γ`, `θ` and `λ̂` for fixed base classifiers from a validation set.
pub fn fit_aggregator(
    classifiers: Vec<BaseModel>,
    validation: &LabeledDataset,
    grid: &[f64],
) -> Result<(CopulaEnsemble, GridSearchOutcome, PredictionMatrix)> {
    let predictions = PredictionMatrix::from_classifiers(&classifiers, validation)?;
    let model = fit_output_model(&predictions, validation.labels(), validation.num_classes())?;
    let outcome = if classifiers.len() < 2 {
        GridSearchOutcome { lambda_hat: 0.0, grid: vec![0.0], correct: Vec::new(), total: validation.len() as u64 }
    } else {
        grid_search_lambda_detailed(&model, &predictions, validation.labels(), grid)?
    };
    let ensemble = CopulaEnsemble::new(classifiers, model, outcome.lambda_hat)?;
    Ok((ensemble, outcome, predictions))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelcoConfig {
    /// Number of training examples held out for validation.
    pub n_val: usize,
    pub grid: Vec<f64>,
    /// Retrain every base classifier on its full node share once `λ̂` is fixed.
    pub retrain: bool,
    pub optimizer: TrainOptions,
    pub seed: u64,
}

/// Everything produced while fitting, for callers that build further combiners.
#[derive(Debug, Clone)]
pub struct DelcoFit {
    pub ensemble: CopulaEnsemble,
    pub validation: LabeledDataset,
    pub val_predictions: PredictionMatrix,
    /// Classifiers trained without the validation rows.
    pub first_pass: Vec<LinearClassifier>,
    /// Classifiers actually used by the ensemble (retrained or first pass).
    pub final_classifiers: Vec<LinearClassifier>,
    pub grid_search: GridSearchOutcome,
}

pub fn fit_delco_detailed(train: &LabeledDataset, plan: &PartitionPlan, cfg: &DelcoConfig) -> Result<DelcoFit> {
    if plan.len() != train.len() {
        return Err(Error::DimensionMismatch { expected: train.len(), found: plan.len() });
    }
    let split = validation_split(train, cfg.n_val, cfg.seed)?;
    let mut in_val = vec![false; train.len()];
    split.val.iter().for_each(|&i| in_val[i] = true);

    let members = plan.members();
    let local_train: Vec<Vec<usize>> =
        members.iter().map(|idx| idx.iter().copied().filter(|&i| !in_val[i]).collect()).collect();
    if let Some(node) = local_train.iter().position(Vec::is_empty) {
        return Err(Error::EmptyNode { node });
    }
    let first_pass = local_train
        .par_iter()
        .map(|idx| train_logreg(&train.subset(idx), &cfg.optimizer))
        .collect::<Result<Vec<_>>>()?;

    let validation = train.subset(&split.val);
    let bases = first_pass.iter().cloned().map(BaseModel::Linear).collect();
    let (mut ensemble, grid_search, val_predictions) = fit_aggregator(bases, &validation, &cfg.grid)?;

    let final_classifiers = if cfg.retrain {
        let retrained = members
            .par_iter()
            .map(|idx| train_logreg(&train.subset(idx), &cfg.optimizer))
            .collect::<Result<Vec<_>>>()?;
        ensemble = ensemble.with_classifiers(retrained.iter().cloned().map(BaseModel::Linear).collect())?;
        retrained
    } else {
        first_pass.clone()
    };
    Ok(DelcoFit { ensemble, validation, val_predictions, first_pass, final_classifiers, grid_search })
}

/// Trains one classifier per node, fits the output model on a held-out
/// validation set and grid-searches `λ̂`.
pub fn fit_delco(train: &LabeledDataset, plan: &PartitionPlan, cfg: &DelcoConfig) -> Result<CopulaEnsemble> {
    fit_delco_detailed(train, plan, cfg).map(|f| f.ensemble)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn empty_validation_is_uniform() {
        let preds = PredictionMatrix::new(vec![], 3).unwrap();
        let m = fit_output_model(&preds, &[], 2).unwrap();
        approx(m.gamma(), &[0.5, 0.5]);
        for k in 0..3 {
            for y in 0..2 {
                approx(m.theta(k, y), &[0.5, 0.5]);
            }
        }
    }

    #[test]
    fn single_example_substitution() {
        let preds = PredictionMatrix::from_rows(&[vec![0]]).unwrap();
        let m = fit_output_model(&preds, &[0], 2).unwrap();
        approx(m.gamma(), &[2.0 / 3.0, 1.0 / 3.0]);
        approx(m.theta(0, 0), &[2.0 / 3.0, 1.0 / 3.0]);
        approx(m.theta(0, 1), &[0.5, 0.5]);
    }

    #[test]
    fn cumulative_running_sum() {
        let m = OutputModel::from_estimates(vec![0.5, 0.25, 0.25], vec![0.2, 0.3, 0.5, 0.2, 0.3, 0.5, 0.2, 0.3, 0.5], 1)
            .unwrap();
        approx(m.cumulative(0, 0), &[0.2, 0.5, 1.0]);
    }

    #[test]
    fn zero_lambda_is_independent_model() {
        let preds = PredictionMatrix::from_rows(&[vec![0, 1], vec![1, 1], vec![0, 0]]).unwrap();
        let m = fit_output_model(&preds, &[0, 1, 0], 2).unwrap();
        let z = [1, 0];
        let s = ensemble_log_scores(&m, &z, 0.0).unwrap();
        for y in 0..2 {
            let want = m.gamma()[y].ln() + m.theta(0, y)[1].ln() + m.theta(1, y)[0].ln();
            assert_eq!(s[y], want);
        }
    }

    #[test]
    fn single_classifier_ignores_lambda() {
        let preds = PredictionMatrix::from_rows(&[vec![1], vec![1], vec![0]]).unwrap();
        let m = fit_output_model(&preds, &[1, 0, 0], 2).unwrap();
        for z in 0..2 {
            let s = ensemble_log_scores(&m, &[z], 0.7).unwrap();
            let direct: Vec<f64> = (0..2).map(|y| m.gamma()[y] * m.theta(0, y)[z]).collect();
            assert_eq!(argmax(&s), argmax(&direct));
        }
    }

    #[test]
    fn table_agrees_with_direct_scores() {
        let preds = PredictionMatrix::from_rows(&[vec![0, 2, 1], vec![1, 1, 1], vec![2, 0, 0], vec![2, 2, 1]]).unwrap();
        let m = fit_output_model(&preds, &[0, 1, 2, 2], 3).unwrap();
        let table = ScoringTable::new(&m);
        for lambda in [-0.4, 0.0, 0.3, 0.95] {
            let c = EquicorrelationCopula::new(lambda, 3).unwrap();
            for z in [[0, 0, 0], [2, 1, 0], [1, 2, 2]] {
                let a = ensemble_log_scores(&m, &z, lambda).unwrap();
                let b = table.log_scores(&z, Some(&c)).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn score_rejects_bad_votes() {
        let m = fit_output_model(&PredictionMatrix::new(vec![], 2).unwrap(), &[], 2).unwrap();
        assert!(ensemble_log_scores(&m, &[0], 0.0).is_err());
        assert!(ensemble_log_scores(&m, &[0, 2], 0.0).is_err());
        assert!(ensemble_log_scores(&m, &[0, 1], 1.0).is_err());
    }

    #[test]
    fn singleton_grid() {
        let preds = PredictionMatrix::from_rows(&[vec![0, 1], vec![1, 0]]).unwrap();
        let m = fit_output_model(&preds, &[0, 1], 2).unwrap();
        assert_eq!(grid_search_lambda(&m, &preds, &[0, 1], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn tie_prefers_value_closest_to_zero() {
        assert_eq!(select_lambda(&[-0.5, -0.1, 0.2, 0.9], &[3, 3, 3, 3]).unwrap(), -0.1);
        assert_eq!(select_lambda(&[-0.2, 0.2], &[1, 1]).unwrap(), -0.2);
        assert_eq!(select_lambda(&[-0.5, 0.0, 0.9], &[3, 2, 4]).unwrap(), 0.9);
        assert!(select_lambda(&[], &[]).is_err());
    }

    #[test]
    fn predictions_only_equal_on_equal_votes() {
        let preds = PredictionMatrix::from_rows(&vec![vec![0, 0, 0]; 5]).unwrap();
        let labels = [0; 5];
        let m = fit_output_model(&preds, &labels, 2).unwrap();
        let g = crate::copula::lambda_grid(3, 11).unwrap();
        // every λ classifies the constant validation set perfectly
        assert_eq!(grid_search_lambda(&m, &preds, &labels, &g).unwrap(), 0.0);
    }
}
