//! Unregularized multinomial logistic regression.
//!
//! Training is full-batch gradient descent from all-zero weights with an
//! Armijo backtracking line search, so a fit is a pure function of the data
//! and the [`TrainOptions`].

use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer, WORD};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};

/// Bias given to classes that never occur in a node's training data. It is
/// finite, but no present class can ever score below it.
pub const ABSENT_CLASS_BIAS: f64 = -1e300;

/// Encoded header: number of classes and input dimension.
pub const MODEL_HEADER_BYTES: usize = 2 * WORD;

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub max_iter: usize,
    /// Stop once the largest absolute gradient entry falls below this.
    pub grad_tol: f64,
    pub initial_step: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { max_iter: 5000, grad_tol: 1e-6, initial_step: 1.0, armijo: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    /// Loss before the first step and after every accepted step.
    pub losses: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Linear scorer with one row of `input_dim + 1` weights per class (bias last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    weights: Vec<f64>,
    num_classes: usize,
    input_dim: usize,
}

impl LinearClassifier {
    pub fn zeros(num_classes: usize, input_dim: usize) -> Self {
        Self { weights: vec![0.0; num_classes * (input_dim + 1)], num_classes, input_dim }
    }

    pub fn from_weights(weights: Vec<f64>, num_classes: usize, input_dim: usize) -> Result<Self> {
        if num_classes < 1 || input_dim < 1 {
            return Err(Error::InvalidArgument(format!(
                "classifier needs positive shape, got {num_classes}x{input_dim}"
            )));
        }
        if weights.len() != num_classes * (input_dim + 1) {
            return Err(Error::DimensionMismatch {
                expected: num_classes * (input_dim + 1),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("classifier weights must be finite".into()));
        }
        Ok(Self { weights, num_classes, input_dim })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, found: x.len() });
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.weights.chunks_exact(self.input_dim + 1).map(|row| affine(row, x)).collect())
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.logits(x)?;
        softmax_in_place(&mut z);
        Ok(z)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        self.check_dim(x)?;
        let mut best = (0, f64::NEG_INFINITY);
        for (c, row) in self.weights.chunks_exact(self.input_dim + 1).enumerate() {
            let s = affine(row, x);
            if s > best.1 {
                best = (c, s);
            }
        }
        Ok(best.0)
    }

    pub fn encoded_len(num_classes: usize, input_dim: usize) -> usize {
        MODEL_HEADER_BYTES + num_classes * (input_dim + 1) * WORD
    }

    /// Header `(ℓ, d)` followed by `ℓ·(d+1)` little-endian reals.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_into(&mut w);
        w.finish()
    }

    pub fn encode_into(&self, w: &mut Writer) {
        w.usize(self.num_classes).usize(self.input_dim).f64s(&self.weights);
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let clf = Self::decode_from(&mut r)?;
        r.expect_end()?;
        Ok(clf)
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self> {
        let num_classes = r.usize()?;
        let input_dim = r.usize()?;
        let count = num_classes
            .checked_mul(input_dim.saturating_add(1))
            .filter(|c| c.saturating_mul(WORD) <= r.remaining())
            .ok_or_else(|| Error::Decode(format!("bad model shape {num_classes}x{input_dim}")))?;
        Self::from_weights(r.f64s(count)?, num_classes, input_dim)
            .map_err(|e| Error::Decode(e.to_string()))
    }
}

#[inline]
fn affine(row: &[f64], x: &[f64]) -> f64 {
    let (w, bias) = row.split_at(x.len());
    w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias[0]
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

/// Mean cross-entropy of a softmax model over a dataset.
///
/// Classes marked inactive are excluded from the softmax and get a zero
/// gradient, which is how classes missing from a node's data are handled.
pub struct CrossEntropy<'a> {
    data: &'a LabeledDataset,
    active: Vec<bool>,
}

impl<'a> CrossEntropy<'a> {
    pub fn new(data: &'a LabeledDataset) -> Self {
        Self { data, active: vec![true; data.num_classes()] }
    }

    pub fn over_present_classes(data: &'a LabeledDataset) -> Self {
        let active = data.class_counts().iter().map(|&c| c > 0).collect();
        Self { data, active }
    }

    pub fn num_params(&self) -> usize {
        self.data.num_classes() * (self.data.dim() + 1)
    }

    fn active_logits(&self, w: &[f64], x: &[f64], out: &mut [f64]) {
        let stride = self.data.dim() + 1;
        for (c, o) in out.iter_mut().enumerate() {
            *o = if self.active[c] { affine(&w[c * stride..(c + 1) * stride], x) } else { f64::NEG_INFINITY };
        }
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        let mut z = vec![0.0; self.data.num_classes()];
        let mut total = 0.0;
        for (x, y) in self.data.rows() {
            self.active_logits(w, x, &mut z);
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - z[y];
        }
        total / self.data.len() as f64
    }

    pub fn value_and_gradient(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let d = self.data.dim();
        let stride = d + 1;
        let mut grad = vec![0.0; w.len()];
        let mut z = vec![0.0; self.data.num_classes()];
        let mut total = 0.0;
        for (x, y) in self.data.rows() {
            self.active_logits(w, x, &mut z);
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in z.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            total += sum.ln() + max - (z[y].ln() + max);
            for (c, p) in z.iter().enumerate() {
                if !self.active[c] {
                    continue;
                }
                let r = p / sum - f64::from(u8::from(c == y));
                let g = &mut grad[c * stride..(c + 1) * stride];
                for (gi, xi) in g[..d].iter_mut().zip(x) {
                    *gi += r * xi;
                }
                g[d] += r;
            }
        }
        let n = self.data.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (total / n, grad)
    }
}

pub fn train_logreg(data: &LabeledDataset, opts: &TrainOptions) -> Result<LinearClassifier> {
    train_logreg_with_report(data, opts).map(|(clf, _)| clf)
}

pub fn train_logreg_with_report(
    data: &LabeledDataset,
    opts: &TrainOptions,
) -> Result<(LinearClassifier, TrainingReport)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let objective = CrossEntropy::over_present_classes(data);
    let mut w = vec![0.0; objective.num_params()];
    let (mut loss, mut grad) = objective.value_and_gradient(&w);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { iteration: 0 });
    }
    let mut report = TrainingReport { losses: vec![loss], iterations: 0, converged: false };
    let mut trial = vec![0.0; w.len()];

    for iter in 0..opts.max_iter {
        let gmax = grad.iter().fold(0.0_f64, |a, g| a.max(g.abs()));
        if gmax < opts.grad_tol {
            report.converged = true;
            break;
        }
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        let mut step = opts.initial_step;
        let mut saw_finite = false;
        let accepted = loop {
            for ((t, wi), gi) in trial.iter_mut().zip(&w).zip(&grad) {
                *t = wi - step * gi;
            }
            let f = objective.value(&trial);
            saw_finite |= f.is_finite();
            if f.is_finite() && f <= loss - opts.armijo * step * gnorm2 {
                break Some(f);
            }
            step *= 0.5;
            if step < 1e-30 {
                break None;
            }
        };
        let Some(_) = accepted else {
            if !saw_finite {
                return Err(Error::NonFiniteLoss { iteration: iter + 1 });
            }
            // no representable step decreases the loss any further
            report.converged = true;
            break;
        };
        std::mem::swap(&mut w, &mut trial);
        let (l, g) = objective.value_and_gradient(&w);
        if !l.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: iter + 1 });
        }
        loss = l;
        grad = g;
        report.losses.push(loss);
        report.iterations = iter + 1;
    }

    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLoss { iteration: report.iterations });
    }
    let stride = data.dim() + 1;
    for (c, active) in objective.active.iter().enumerate() {
        if !active {
            w[c * stride + data.dim()] = ABSENT_CLASS_BIAS;
        }
    }
    Ok((LinearClassifier { weights: w, num_classes: data.num_classes(), input_dim: data.dim() }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_data(seed: u64, n: usize, d: usize, classes: usize) -> LabeledDataset {
        let mut rng = rng_from_seed(seed);
        let feats = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels = (0..n).map(|i| i % classes).collect();
        LabeledDataset::new(feats, d, labels, classes).unwrap()
    }

    #[test]
    fn separable_one_dimensional() {
        let data = LabeledDataset::new(vec![-1.0, 1.0], 1, vec![0, 1], 2).unwrap();
        let clf = train_logreg(&data, &TrainOptions::default()).unwrap();
        assert_eq!(clf.predict(&[-1.0]).unwrap(), 0);
        assert_eq!(clf.predict(&[1.0]).unwrap(), 1);
    }

    #[test]
    fn single_class_node_predicts_it_everywhere() {
        let data = LabeledDataset::new(vec![0.5, 1.0, 2.0], 1, vec![2, 2, 2], 3).unwrap();
        let clf = train_logreg(&data, &TrainOptions::default()).unwrap();
        for x in [-1e6, -3.0, 0.0, 7.5, 1e6] {
            assert_eq!(clf.predict(&[x]).unwrap(), 2);
        }
        assert!(clf.weights().iter().all(|w| w.is_finite()));
    }

    #[test]
    fn zero_weights_predict_class_zero() {
        let clf = LinearClassifier::zeros(4, 3);
        assert_eq!(clf.predict(&[1.0, -2.0, 3.0]).unwrap(), 0);
    }

    #[test]
    fn dominant_row_wins() {
        let mut w = vec![0.0; 3 * 2];
        w[2 * 2 + 1] = 100.0;
        let clf = LinearClassifier::from_weights(w, 3, 1).unwrap();
        assert_eq!(clf.predict(&[0.3]).unwrap(), 2);
    }

    #[test]
    fn predict_rejects_wrong_dimension() {
        let clf = LinearClassifier::zeros(2, 3);
        assert!(matches!(clf.predict(&[1.0]), Err(Error::DimensionMismatch { expected: 3, found: 1 })));
    }

    #[test]
    fn predict_matches_softmax_argmax() {
        let mut rng = rng_from_seed(4);
        let w: Vec<f64> = (0..4 * 4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let clf = LinearClassifier::from_weights(w, 4, 3).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let p = clf.probabilities(&x).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(clf.predict(&x).unwrap(), argmax(&p));
        }
    }

    #[test]
    fn shifting_all_rows_keeps_prediction() {
        let mut rng = rng_from_seed(8);
        let w: Vec<f64> = (0..3 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let clf = LinearClassifier::from_weights(w.clone(), 3, 2).unwrap();
        let shift = [0.7, -1.3, 2.0];
        let shifted: Vec<f64> = w.iter().enumerate().map(|(i, v)| v + shift[i % 3]).collect();
        let clf2 = LinearClassifier::from_weights(shifted, 3, 2).unwrap();
        for _ in 0..100 {
            let x = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
            assert_eq!(clf.predict(&x).unwrap(), clf2.predict(&x).unwrap());
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..10 {
            let data = random_data(seed, 20, 4, 3);
            let obj = CrossEntropy::new(&data);
            let mut rng = rng_from_seed(100 + seed);
            let w: Vec<f64> = (0..obj.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, g) = obj.value_and_gradient(&w);
            let h = 1e-5;
            let mut wp = w.clone();
            for i in 0..w.len() {
                wp[i] = w[i] + h;
                let fp = obj.value(&wp);
                wp[i] = w[i] - h;
                let fm = obj.value(&wp);
                wp[i] = w[i];
                let fd = (fp - fm) / (2.0 * h);
                let rel = (fd - g[i]).abs() / g[i].abs().max(fd.abs()).max(1e-8);
                assert!(rel <= 1e-5, "seed {seed} param {i}: fd {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn loss_never_increases() {
        let data = random_data(3, 60, 2, 3);
        let opts = TrainOptions { max_iter: 300, ..Default::default() };
        let (_, report) = train_logreg_with_report(&data, &opts).unwrap();
        for pair in report.losses.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = random_data(5, 50, 3, 2);
        let a = train_logreg(&data, &TrainOptions::default()).unwrap();
        let b = train_logreg(&data, &TrainOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exploding_features_abort() {
        let data = LabeledDataset::new(vec![1e308, -1e308], 1, vec![0, 1], 2).unwrap();
        assert!(matches!(
            train_logreg(&data, &TrainOptions::default()),
            Err(Error::NonFiniteLoss { .. })
        ));
    }

    #[test]
    fn encoding_size_and_decode() {
        let clf = train_logreg(&random_data(1, 30, 3, 3), &TrainOptions::default()).unwrap();
        let bytes = clf.encode();
        assert_eq!(bytes.len(), LinearClassifier::encoded_len(3, 3));
        assert_eq!(LinearClassifier::decode(&bytes).unwrap(), clf);
        assert!(LinearClassifier::decode(&bytes[..bytes.len() - 1]).is_err());
    }
}
