//! One-shot star protocol with exact byte accounting.
//!
//! Nodes train once, share their models, report validation tallies to a
//! coordinator, receive the pooled estimates back and report per-`λ`
//! correct counts. Every message carries the encoded payload its receiver
//! decodes, so the traced volume is the real transfer volume.

use std::fmt;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::aggregation::{
    fit_aggregator, grid_correct_counts, select_lambda, CopulaEnsemble, GridSearchOutcome, OutputCounts,
    OutputModel, PredictionMatrix,
};
use crate::baselines::BaseModel;
use crate::codec::{Reader, Writer, WORD};
use crate::copula::lambda_grid;
use crate::data::{split_indices, validation_size, LabeledDataset};
use crate::error::{Error, Result};
use crate::learner::{train_logreg, LinearClassifier, TrainOptions, MODEL_HEADER_BYTES};
use crate::rng::derive_seed;

/// Grid size used when no explicit grid is configured.
pub const DEFAULT_GRID_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Node(usize),
    Coordinator,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Node(k) => write!(f, "node-{k}"),
            Endpoint::Coordinator => f.write_str("coordinator"),
        }
    }
}

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageKind {
    ModelShare,
    ConfusionMatrix,
    ClassCounts,
    GlobalEstimates,
    GridAccuracies,
}

impl MessageKind {
    pub const ALL: [MessageKind; 5] = [
        MessageKind::ModelShare,
        MessageKind::ConfusionMatrix,
        MessageKind::ClassCounts,
        MessageKind::GlobalEstimates,
        MessageKind::GridAccuracies,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProtocolMessage {
    pub sender: Endpoint,
    pub receiver: Endpoint,
    pub kind: MessageKind,
    pub payload_bytes: usize,
    #[serde(skip)]
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceSummary {
    pub messages: usize,
    pub total_bytes: usize,
    pub predicted_load: usize,
    /// Model bytes exchanged between nodes.
    pub peer_model_bytes: usize,
    /// Model bytes sent from nodes to the coordinator.
    pub coordinator_model_bytes: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NetworkTrace {
    messages: Vec<ProtocolMessage>,
    total_bytes: usize,
}

impl NetworkTrace {
    fn push(&mut self, sender: Endpoint, receiver: Endpoint, kind: MessageKind, payload: Vec<u8>) {
        self.total_bytes += payload.len();
        self.messages.push(ProtocolMessage { sender, receiver, kind, payload_bytes: payload.len(), payload });
    }

    pub fn messages(&self) -> &[ProtocolMessage] {
        &self.messages
    }

    pub fn total_bytes(&self) -> usize {
        self.total_bytes
    }

    pub fn count(&self, kind: MessageKind) -> usize {
        self.messages.iter().filter(|m| m.kind == kind).count()
    }

    pub fn bytes_of(&self, kind: MessageKind) -> usize {
        self.messages.iter().filter(|m| m.kind == kind).map(|m| m.payload_bytes).sum()
    }

    pub fn summary(&self, predicted_load: usize) -> TraceSummary {
        let model_bytes = |to_peer: bool| {
            self.messages
                .iter()
                .filter(|m| m.kind == MessageKind::ModelShare && matches!(m.receiver, Endpoint::Node(_)) == to_peer)
                .map(|m| m.payload_bytes)
                .sum()
        };
        TraceSummary {
            messages: self.messages.len(),
            total_bytes: self.total_bytes,
            predicted_load,
            peer_model_bytes: model_bytes(true),
            coordinator_model_bytes: model_bytes(false),
        }
    }

    /// One JSON object per message, then a `{"summary": ...}` line.
    pub fn to_json_lines(&self, predicted_load: usize) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&serde_json::to_string(m).expect("message serializes"));
            out.push('\n');
        }
        let summary = serde_json::json!({ "summary": self.summary(predicted_load) });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    /// Share of each node's data held out as its local validation set.
    pub val_fraction: f64,
    /// Explicit `λ` grid; `None` uses the default grid for the node count.
    pub grid: Option<Vec<f64>>,
    pub optimizer: TrainOptions,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self { val_fraction: 0.1, grid: None, optimizer: TrainOptions::default(), seed: 0 }
    }
}

impl ProtocolConfig {
    pub fn resolve_grid(&self, m: usize) -> Result<Vec<f64>> {
        match &self.grid {
            Some(g) => Ok(g.clone()),
            None => lambda_grid(m, DEFAULT_GRID_POINTS),
        }
    }
}

/// Closed-form byte total of [`run_protocol`] for `m` nodes, input dimension
/// `d`, `num_classes` classes and `grid_size` grid values.
pub fn predicted_load(m: usize, d: usize, num_classes: usize, grid_size: usize) -> usize {
    let l = num_classes;
    let model = MODEL_HEADER_BYTES + l * (d + 1) * WORD;
    let confusion = CONFUSION_HEADER_BYTES + l * l * WORD;
    let class_counts = l * WORD;
    let estimates = (l + m * l * l) * WORD;
    let grid = GRID_HEADER_BYTES + grid_size * 2 * WORD;
    (m * (m - 1) + m) * model + m * m * confusion + m * class_counts + m * estimates + m * grid
}

/// Confusion payload header: the matrix shape.
pub const CONFUSION_HEADER_BYTES: usize = 2 * WORD;
/// Grid payload header: the number of `(correct, total)` pairs.
pub const GRID_HEADER_BYTES: usize = WORD;

/// Local train/validation split of every node.
pub fn local_splits(
    node_datasets: &[LabeledDataset],
    cfg: &ProtocolConfig,
) -> Result<Vec<(LabeledDataset, LabeledDataset)>> {
    node_datasets
        .iter()
        .enumerate()
        .map(|(node, data)| {
            if data.is_empty() {
                return Err(Error::EmptyNode { node });
            }
            let n_val = validation_size(data.len(), cfg.val_fraction)?;
            if n_val == 0 {
                return Err(Error::EmptyValidation { node });
            }
            let split = split_indices(data.len(), n_val, derive_seed(cfg.seed, "local-val", node as u64))?;
            if split.train.is_empty() {
                return Err(Error::EmptyNode { node });
            }
            Ok((data.subset(&split.train), data.subset(&split.val)))
        })
        .collect()
}

fn check_shapes(node_datasets: &[LabeledDataset]) -> Result<(usize, usize)> {
    if node_datasets.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "the protocol needs at least 2 nodes, got {}",
            node_datasets.len()
        )));
    }
    let (d, l) = (node_datasets[0].dim(), node_datasets[0].num_classes());
    for nd in node_datasets {
        if nd.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: nd.dim() });
        }
        if nd.num_classes() != l {
            return Err(Error::DimensionMismatch { expected: l, found: nd.num_classes() });
        }
    }
    Ok((d, l))
}

fn encode_confusion(counts: &OutputCounts, k: usize) -> Vec<u8> {
    let l = counts.num_classes();
    let mut w = Writer::new();
    w.usize(l).usize(l).u64s(counts.confusion_matrix(k));
    w.finish()
}

fn decode_confusion(bytes: &[u8], num_classes: usize) -> Result<Vec<u64>> {
    let mut r = Reader::new(bytes);
    let (rows, cols) = (r.usize()?, r.usize()?);
    if (rows, cols) != (num_classes, num_classes) {
        return Err(Error::Decode(format!("confusion matrix is {rows}x{cols}, expected {num_classes}x{num_classes}")));
    }
    let out = r.u64s(num_classes * num_classes)?;
    r.expect_end()?;
    Ok(out)
}

fn decode_exact_u64s(bytes: &[u8], n: usize) -> Result<Vec<u64>> {
    let mut r = Reader::new(bytes);
    let out = r.u64s(n)?;
    r.expect_end()?;
    Ok(out)
}

/// Runs the protocol on the private datasets of `m ≥ 2` nodes and returns the
/// coordinator's ensemble together with the full message trace.
pub fn run_protocol(node_datasets: &[LabeledDataset], cfg: &ProtocolConfig) -> Result<(CopulaEnsemble, NetworkTrace)> {
    run_protocol_detailed(node_datasets, cfg).map(|o| (o.ensemble, o.trace))
}

#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub ensemble: CopulaEnsemble,
    pub trace: NetworkTrace,
    pub grid_search: GridSearchOutcome,
    /// Local train/validation split of every node.
    pub splits: Vec<(LabeledDataset, LabeledDataset)>,
}

pub fn run_protocol_detailed(node_datasets: &[LabeledDataset], cfg: &ProtocolConfig) -> Result<ProtocolOutcome> {
    let (_, l) = check_shapes(node_datasets)?;
    let m = node_datasets.len();
    let grid = cfg.resolve_grid(m)?;
    let splits = local_splits(node_datasets, cfg)?;
    let mut trace = NetworkTrace::default();
    let coord = Endpoint::Coordinator;

    // Phase 1: local training and one-time model sharing.
    let blobs = splits
        .par_iter()
        .map(|(train, _)| train_logreg(train, &cfg.optimizer).map(|c| c.encode()))
        .collect::<Result<Vec<_>>>()?;
    for (k, blob) in blobs.iter().enumerate() {
        for r in (0..m).filter(|&r| r != k) {
            trace.push(Endpoint::Node(k), Endpoint::Node(r), MessageKind::ModelShare, blob.clone());
        }
        trace.push(Endpoint::Node(k), coord, MessageKind::ModelShare, blob.clone());
    }
    // every receiver decodes the same bytes, so one decoded copy serves all
    let models = blobs.iter().map(|b| LinearClassifier::decode(b)).collect::<Result<Vec<_>>>()?;
    let bases: Vec<BaseModel> = models.into_iter().map(BaseModel::Linear).collect();

    // Phase 2: local validation tallies.
    let local = splits
        .par_iter()
        .map(|(_, val)| {
            let preds = PredictionMatrix::from_classifiers(&bases, val)?;
            let counts = OutputCounts::from_predictions(&preds, val.labels(), l)?;
            Ok((preds, counts))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pooled = OutputCounts::zeros(m, l);
    for (node, (_, counts)) in local.iter().enumerate() {
        let sender = Endpoint::Node(node);
        let mut confusion = Vec::with_capacity(m * l * l);
        for k in 0..m {
            let payload = encode_confusion(counts, k);
            confusion.extend(decode_confusion(&payload, l)?);
            trace.push(sender, coord, MessageKind::ConfusionMatrix, payload);
        }
        let mut w = Writer::new();
        w.u64s(counts.class_counts());
        let payload = w.finish();
        let class_counts = decode_exact_u64s(&payload, l)?;
        trace.push(sender, coord, MessageKind::ClassCounts, payload);
        pooled.merge(&OutputCounts::from_parts(class_counts, confusion, m)?)?;
    }

    // Phase 3: pooled smoothing; phase 4: broadcast of the estimates.
    let global = OutputModel::from_counts(&pooled);
    let mut w = Writer::new();
    w.f64s(global.gamma()).f64s(global.theta_tensor());
    let estimates = w.finish();
    for node in 0..m {
        trace.push(coord, Endpoint::Node(node), MessageKind::GlobalEstimates, estimates.clone());
    }
    let received = {
        let mut r = Reader::new(&estimates);
        let gamma = r.f64s(l)?;
        let theta = r.f64s(m * l * l)?;
        r.expect_end()?;
        OutputModel::from_estimates(gamma, theta, m)?
    };

    // Phase 5: local grid accuracies.
    let local_correct = local
        .par_iter()
        .zip(&splits)
        .map(|((preds, _), (_, val))| grid_correct_counts(&received, preds, val.labels(), &grid))
        .collect::<Result<Vec<_>>>()?;

    // Phase 6: count-weighted pooling and selection.
    let mut correct = vec![0u64; grid.len()];
    let mut total = 0u64;
    for (node, (counts, (_, val))) in local_correct.iter().zip(&splits).enumerate() {
        let mut w = Writer::new();
        w.usize(grid.len());
        for &c in counts {
            w.u64(c).usize(val.len());
        }
        let payload = w.finish();
        let mut r = Reader::new(&payload);
        let g = r.usize()?;
        if g != grid.len() {
            return Err(Error::Decode(format!("grid report has {g} entries, expected {}", grid.len())));
        }
        let pairs = r.u64s(2 * g)?;
        r.expect_end()?;
        for (acc, pair) in correct.iter_mut().zip(pairs.chunks_exact(2)) {
            *acc += pair[0];
        }
        total += pairs.chunks_exact(2).next().map_or(0, |p| p[1]);
        trace.push(Endpoint::Node(node), coord, MessageKind::GridAccuracies, payload);
    }
    let lambda_hat = select_lambda(&grid, &correct)?;
    let ensemble = CopulaEnsemble::new(bases, global, lambda_hat)?;
    let grid_search = GridSearchOutcome { lambda_hat, grid, correct, total };
    Ok(ProtocolOutcome { ensemble, trace, grid_search, splits })
}

/// The same pipeline run in one place: identical local classifiers, output
/// model and grid search fitted on the concatenation of the local validation sets.
pub fn centralized_reference(
    node_datasets: &[LabeledDataset],
    cfg: &ProtocolConfig,
) -> Result<(CopulaEnsemble, GridSearchOutcome)> {
    check_shapes(node_datasets)?;
    let grid = cfg.resolve_grid(node_datasets.len())?;
    let splits = local_splits(node_datasets, cfg)?;
    let classifiers = splits
        .par_iter()
        .map(|(train, _)| train_logreg(train, &cfg.optimizer).map(BaseModel::Linear))
        .collect::<Result<Vec<_>>>()?;
    let vals: Vec<&LabeledDataset> = splits.iter().map(|(_, v)| v).collect();
    let pooled = LabeledDataset::concat(&vals)?;
    let (ensemble, outcome, _) = fit_aggregator(classifiers, &pooled, &grid)?;
    Ok((ensemble, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_blobs, partition_synthetic, RegionScheme};

    fn nodes(n: usize, seed: u64) -> Vec<LabeledDataset> {
        let data = gen_blobs(n, seed).unwrap();
        partition_synthetic(&data, RegionScheme::Blobs2).unwrap().node_datasets(&data).unwrap()
    }

    #[test]
    fn two_node_message_counts() {
        let (_, trace) = run_protocol(&nodes(80, 1), &ProtocolConfig::default()).unwrap();
        assert_eq!(trace.count(MessageKind::ModelShare), 2 + 2);
        assert_eq!(trace.count(MessageKind::ConfusionMatrix), 4);
        assert_eq!(trace.count(MessageKind::ClassCounts), 2);
        assert_eq!(trace.count(MessageKind::GlobalEstimates), 2);
        assert_eq!(trace.count(MessageKind::GridAccuracies), 2);
        assert_eq!(trace.total_bytes(), predicted_load(2, 2, 3, DEFAULT_GRID_POINTS));
    }

    #[test]
    fn empty_grid_costs_headers_only() {
        let with = predicted_load(3, 2, 2, 0);
        let without_grid = predicted_load(3, 2, 2, 1) - 3 * 2 * WORD;
        assert_eq!(with, without_grid);
    }

    #[test]
    fn rejects_single_node_and_empty_validation() {
        let ns = nodes(80, 2);
        assert!(run_protocol(&ns[..1], &ProtocolConfig::default()).is_err());
        let tiny = vec![ns[0].subset(&[0, 1]), ns[1].clone()];
        assert!(matches!(
            run_protocol(&tiny, &ProtocolConfig::default()),
            Err(Error::EmptyValidation { node: 0 })
        ));
    }

    #[test]
    fn json_lines_end_with_summary() {
        let (_, trace) = run_protocol(&nodes(80, 3), &ProtocolConfig::default()).unwrap();
        let text = trace.to_json_lines(123);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), trace.messages().len() + 1);
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first["sender"], "node-0");
        assert_eq!(first["receiver"], "node-1");
        assert_eq!(first["kind"], "model-share");
        let last: serde_json::Value = serde_json::from_str(lines.last().unwrap()).unwrap();
        assert_eq!(last["summary"]["predicted_load"], 123);
        assert_eq!(last["summary"]["total_bytes"], trace.total_bytes());
    }
}
