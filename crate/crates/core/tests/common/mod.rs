//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use delco::aggregation::OutputModel;
use delco::rng::Rng;
use delco::LabeledDataset;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Normal quantile by bisection on the distribution function. The upper
/// half is mirrored onto the lower tail, where the distribution function
/// keeps full relative precision.
pub fn normal_quantile_bisect(p: f64) -> f64 {
    if p > 0.5 {
        return -normal_quantile_bisect(1.0 - p);
    }
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Inverse and log-determinant of a dense symmetric positive definite matrix
/// by Gauss-Jordan elimination with partial pivoting.
pub fn dense_inverse_logdet(a: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| f64::from(u8::from(i == j))));
            r
        })
        .collect();
    let mut logdet = 0.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        assert!(p > 0.0 || piv != col, "matrix is not positive definite");
        logdet += p.abs().ln();
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                let pivot_row = m[col].clone();
                for (v, pv) in m[r].iter_mut().zip(pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    (m.into_iter().map(|r| r[n..].to_vec()).collect(), logdet)
}

pub fn equicorrelation(m: usize, lambda: f64) -> Vec<Vec<f64>> {
    (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { lambda }).collect()).collect()
}

/// Gaussian copula log-density with dense algebra: `-½ log|R| - ½ vᵀ(R⁻¹ - I)v`.
pub fn dense_copula_log_density(lambda: f64, u: &[f64]) -> f64 {
    let m = u.len();
    let (inv, logdet) = dense_inverse_logdet(&equicorrelation(m, lambda));
    let v: Vec<f64> = u.iter().map(|&x| normal_quantile_bisect(x.clamp(1e-12, 1.0 - 1e-12))).collect();
    let mut quad = 0.0;
    for i in 0..m {
        for j in 0..m {
            let a = inv[i][j] - f64::from(u8::from(i == j));
            quad += v[i] * a * v[j];
        }
    }
    -0.5 * logdet - 0.5 * quad
}

pub fn dense_copula_density(lambda: f64, u: &[f64]) -> f64 {
    dense_copula_log_density(lambda, u).exp()
}

/// Posterior `p(y | z)` obtained by evaluating the joint on every `(z', y)`
/// and conditioning on `z' = z`. Kept in logs: near the correlation bounds
/// the joint underflows for every class.
pub fn brute_force_posterior(model: &OutputModel, z: &[usize], lambda: f64) -> Vec<f64> {
    let (m, l) = (model.num_classifiers(), model.num_classes());
    let total = l.pow(m as u32);
    let mut joint = vec![vec![0.0; l]; total];
    for (code, row) in joint.iter_mut().enumerate() {
        let zz: Vec<usize> = (0..m).map(|k| (code / l.pow(k as u32)) % l).collect();
        for (y, cell) in row.iter_mut().enumerate() {
            let mut lp = model.gamma()[y].ln();
            let mut u = Vec::with_capacity(m);
            for (k, &j) in zz.iter().enumerate() {
                lp += model.theta(k, y)[j].ln();
                u.push(model.theta(k, y)[..=j].iter().sum::<f64>());
            }
            if m > 1 {
                lp += dense_copula_log_density(lambda, &u);
            }
            *cell = lp;
        }
    }
    let code: usize = z.iter().enumerate().map(|(k, &j)| j * l.pow(k as u32)).sum();
    let row = &joint[code];
    let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = row.iter().map(|lp| (lp - mx).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|p| p / s).collect()
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let mx = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn random_simplex(rng: &mut Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

/// Output model with random strictly positive probabilities.
pub fn random_model(rng: &mut Rng, m: usize, l: usize) -> OutputModel {
    let gamma = random_simplex(rng, l);
    let theta = (0..m * l).flat_map(|_| random_simplex(rng, l)).collect();
    OutputModel::from_estimates(gamma, theta, m).unwrap()
}

pub fn random_votes(rng: &mut Rng, m: usize, l: usize) -> Vec<usize> {
    (0..m).map(|_| rng.random_range(0..l)).collect()
}

/// Gaussian classes around random centers.
pub fn random_blobs(rng: &mut Rng, n: usize, d: usize, l: usize) -> LabeledDataset {
    let centers: Vec<Vec<f64>> = (0..l).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
    let mut feats = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % l;
        for c in &centers[y] {
            let e: f64 = StandardNormal.sample(rng);
            feats.push(c + e);
        }
        labels.push(y);
    }
    LabeledDataset::new(feats, d, labels, l).unwrap()
}

/// Beta distribution function by composite Simpson integration of the density.
/// Each half of `[0, 1]` is integrated from its endpoint under `x = s^4`,
/// which turns the endpoint factor `x^(a-1)` into the smooth `s^(4a-1)`.
pub fn beta_cdf_simpson(x: f64, a: f64, b: f64) -> f64 {
    assert!(a >= 1.0 && b >= 1.0, "oracle covers a, b >= 1");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    // ∫_0^t x^(p-1) (1-x)^(q-1) dx for t <= 1/2
    let head = |t: f64, p: f64, q: f64| {
        let f = |s: f64| {
            if s <= 0.0 {
                return 0.0;
            }
            let x = s.powi(4);
            4.0 * ((4.0 * p - 1.0) * s.ln() + (q - 1.0) * (1.0 - x).ln()).exp()
        };
        let n = 20_000;
        let hi = t.powf(0.25);
        let h = hi / n as f64;
        let mut acc = f(0.0) + f(hi);
        for i in 1..n {
            acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    };
    let whole = head(0.5, a, b) + head(0.5, b, a);
    if x <= 0.5 {
        head(x, a, b) / whole
    } else {
        1.0 - head(1.0 - x, b, a) / whole
    }
}

pub fn beta_quantile_oracle(q: f64, a: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if beta_cdf_simpson(mid, a, b) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn clopper_pearson_oracle(s: u64, n: u64, confidence: f64) -> (f64, f64) {
    let alpha = 1.0 - confidence;
    let (sf, nf) = (s as f64, n as f64);
    let low = if s == 0 { 0.0 } else { beta_quantile_oracle(alpha / 2.0, sf, nf - sf + 1.0) };
    let high = if s == n { 1.0 } else { beta_quantile_oracle(1.0 - alpha / 2.0, sf + 1.0, nf - sf) };
    (low, high)
}

/// Pairs `(z, y)` drawn from the copula-coupled joint of `model` with
/// parameter `lambda`, normalized by enumeration over all vote vectors.
pub fn sample_joint(model: &OutputModel, lambda: f64, n: usize, rng: &mut Rng) -> (Vec<Vec<usize>>, Vec<usize>) {
    let (m, l) = (model.num_classifiers(), model.num_classes());
    let total = l.pow(m as u32);
    let decode = |code: usize| -> Vec<usize> { (0..m).map(|k| (code / l.pow(k as u32)) % l).collect() };
    let cond: Vec<Vec<f64>> = (0..l)
        .map(|y| {
            let w: Vec<f64> = (0..total)
                .map(|code| {
                    let z = decode(code);
                    let u: Vec<f64> = z.iter().enumerate().map(|(k, &j)| model.theta(k, y)[..=j].iter().sum()).collect();
                    let p: f64 = z.iter().enumerate().map(|(k, &j)| model.theta(k, y)[j]).product();
                    p * dense_copula_density(lambda, &u)
                })
                .collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|v| v / s).collect()
        })
        .collect();
    let pick = |probs: &[f64], r: f64| {
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if r < acc {
                return i;
            }
        }
        probs.len() - 1
    };
    let mut zs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let y = pick(model.gamma(), rng.random::<f64>());
        zs.push(decode(pick(&cond[y], rng.random::<f64>())));
        ys.push(y);
    }
    (zs, ys)
}
