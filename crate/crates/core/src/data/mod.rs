//! Datasets, generators, ingestion and the schemes that distribute examples
//! across network nodes.

mod csv_io;
mod generate;
mod partition;

pub use csv_io::{load_csv, read_csv, write_csv, write_csv_to, BinarizeRule, ColumnSpec, CsvOptions};
pub use generate::{
    gen_blobs, gen_circles, gen_moons, sample_blobs, sample_circles, sample_moons,
    SyntheticProcess, BLOBS_NOISE_STD, CIRCLES_NOISE_STD, MOONS_NOISE_STD,
};
pub use partition::{partition_synthetic, pca_class_split, top_principal_direction, RegionScheme};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Feature matrix (row-major, `len × dim`) with class labels in `0..num_classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDataset("feature dimension must be at least 1".into()));
        }
        if num_classes < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::InvalidDataset(format!(
                "{} feature values do not form {} rows of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidDataset(format!(
                "label {bad} outside 0..{num_classes}"
            )));
        }
        Ok(Self { features, labels, dim, num_classes })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: r.len() });
        }
        if rows.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        Self::new(rows.concat(), dim, labels, num_classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = (&[f64], usize)> + '_ {
        self.features.chunks_exact(self.dim).zip(self.labels.iter().copied())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order. Keeps `num_classes` even if some classes vanish.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self { features, labels, dim: self.dim, num_classes: self.num_classes }
    }

    pub fn concat(parts: &[&LabeledDataset]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyDataset)?;
        let mut out = Self {
            features: Vec::new(),
            labels: Vec::new(),
            dim: first.dim,
            num_classes: first.num_classes,
        };
        for p in parts {
            if p.dim != out.dim {
                return Err(Error::DimensionMismatch { expected: out.dim, found: p.dim });
            }
            if p.num_classes != out.num_classes {
                return Err(Error::InvalidDataset(format!(
                    "cannot concatenate {}-class and {}-class datasets",
                    out.num_classes, p.num_classes
                )));
            }
            out.features.extend_from_slice(&p.features);
            out.labels.extend_from_slice(&p.labels);
        }
        Ok(out)
    }

    /// Z-scores every feature column in place; constant columns are only centered.
    pub fn standardize(&mut self) {
        let n = self.len();
        if n == 0 {
            return;
        }
        for c in 0..self.dim {
            let mean = self.features.iter().skip(c).step_by(self.dim).sum::<f64>() / n as f64;
            let var = self
                .features
                .iter()
                .skip(c)
                .step_by(self.dim)
                .map(|v| (v - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            let sd = var.sqrt();
            for v in self.features.iter_mut().skip(c).step_by(self.dim) {
                *v -= mean;
                if sd > 0.0 {
                    *v /= sd;
                }
            }
        }
    }
}

/// Assignment of every example of a dataset to one of `num_nodes` nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    assignments: Vec<usize>,
    num_nodes: usize,
}

impl PartitionPlan {
    pub fn new(assignments: Vec<usize>, num_nodes: usize) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::InvalidArgument("a partition needs at least one node".into()));
        }
        let mut seen = vec![false; num_nodes];
        for &a in &assignments {
            if a >= num_nodes {
                return Err(Error::InvalidArgument(format!(
                    "node index {a} outside 0..{num_nodes}"
                )));
            }
            seen[a] = true;
        }
        if let Some(region) = seen.iter().position(|s| !s) {
            return Err(Error::EmptyRegion { region });
        }
        Ok(Self { assignments, num_nodes })
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Row indices per node, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_nodes];
        for (i, &a) in self.assignments.iter().enumerate() {
            out[a].push(i);
        }
        out
    }

    pub fn node_datasets(&self, data: &LabeledDataset) -> Result<Vec<LabeledDataset>> {
        if data.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: data.len() });
        }
        Ok(self.members().iter().map(|idx| data.subset(idx)).collect())
    }
}

/// Row indices of a train/validation split, each list ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Uniform split without replacement of `0..n` into `n - n_val` and `n_val` rows.
pub fn split_indices(n: usize, n_val: usize, seed: u64) -> Result<SplitIndices> {
    if n_val > n {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {n_val} validation rows from {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let mut val = perm[..n_val].to_vec();
    let mut train = perm[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok(SplitIndices { train, val })
}

/// Like [`split_indices`] but rejects validation sets that miss a class.
pub fn validation_split(data: &LabeledDataset, n_val: usize, seed: u64) -> Result<SplitIndices> {
    let split = split_indices(data.len(), n_val, seed)?;
    let mut seen = vec![false; data.num_classes()];
    for &i in &split.val {
        seen[data.label(i)] = true;
    }
    if let Some(class) = seen.iter().position(|s| !s) {
        return Err(Error::ClassMissingFromValidation { class });
    }
    Ok(split)
}

/// Validation size used throughout: `round(fraction * n)`.
pub fn validation_size(n: usize, val_fraction: f64) -> Result<usize> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction {val_fraction} must lie in (0, 1)"
        )));
    }
    Ok((val_fraction * n as f64).round() as usize)
}

pub fn train_val_split(
    data: &LabeledDataset,
    val_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let n_val = validation_size(data.len(), val_fraction)?;
    let split = validation_split(data, n_val, seed)?;
    Ok((data.subset(&split.train), data.subset(&split.val)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> LabeledDataset {
        let feats: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let labels = (0..n).map(|i| i % 2).collect();
        LabeledDataset::new(feats, 1, labels, 2).unwrap()
    }

    #[test]
    fn rejects_inconsistent_shapes() {
        assert!(LabeledDataset::new(vec![1.0, 2.0, 3.0], 2, vec![0, 1], 2).is_err());
        assert!(LabeledDataset::new(vec![1.0], 1, vec![2], 2).is_err());
        assert!(LabeledDataset::new(vec![1.0], 1, vec![0], 1).is_err());
        assert!(LabeledDataset::new(vec![], 0, vec![], 2).is_err());
    }

    #[test]
    fn validation_fraction_sets_size() {
        let data = toy(200);
        let (train, val) = train_val_split(&data, 0.1, 3).unwrap();
        assert_eq!(val.len(), 20);
        assert_eq!(train.len(), 180);
    }

    #[test]
    fn split_is_a_partition() {
        let data = toy(57);
        let s = validation_split(&data, 9, 11).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..57).collect::<Vec<_>>());
    }

    #[test]
    fn two_example_half_split_either_covers_or_fails() {
        let data = LabeledDataset::new(vec![0.0, 1.0], 1, vec![0, 1], 2).unwrap();
        for seed in 0..8 {
            // one validation example can never hold both classes
            assert!(matches!(
                train_val_split(&data, 0.5, seed),
                Err(Error::ClassMissingFromValidation { .. })
            ));
        }
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let data = toy(10);
        assert!(train_val_split(&data, 0.0, 0).is_err());
        assert!(train_val_split(&data, 1.0, 0).is_err());
    }

    #[test]
    fn plan_requires_every_node() {
        assert!(matches!(
            PartitionPlan::new(vec![0, 0, 2], 3),
            Err(Error::EmptyRegion { region: 1 })
        ));
        let p = PartitionPlan::new(vec![1, 0, 1], 2).unwrap();
        assert_eq!(p.members(), vec![vec![1], vec![0, 2]]);
    }

    #[test]
    fn standardize_zero_mean_unit_variance() {
        let mut d = toy(10);
        d.standardize();
        let mean: f64 = d.features().iter().sum::<f64>() / 10.0;
        let var: f64 = d.features().iter().map(|v| v * v).sum::<f64>() / 10.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }
}
