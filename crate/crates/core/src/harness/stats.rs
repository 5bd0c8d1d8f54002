//! Exact binomial intervals and the sequential accuracy estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CF_MAX_ITER: usize = 100_000;
const CF_EPS: f64 = 1e-15;
const TINY: f64 = 1e-300;
/// Width at which the quantile bisection stops.
pub const QUANTILE_TOL: f64 = 1e-10;

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// Continued fraction of the incomplete beta function (modified Lentz).
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for i in 1..=CF_MAX_ITER {
        let m = i as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() * beta_cf(x, a, b) / a).clamp(0.0, 1.0)
    } else {
        (1.0 - ln_front.exp() * beta_cf(1.0 - x, b, a) / b).clamp(0.0, 1.0)
    }
}

/// `q`-quantile of Beta(a, b) by bisection on the distribution function.
pub fn beta_quantile(q: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) || !(a > 0.0) || !(b > 0.0) {
        return Err(Error::InvalidArgument(format!("beta quantile needs q in [0,1] and a, b > 0 (q={q}, a={a}, b={b})")));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > QUANTILE_TOL {
        let mid = 0.5 * (lo + hi);
        if regularized_incomplete_beta(mid, a, b) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Exact (Clopper-Pearson) confidence interval for a binomial proportion.
pub fn clopper_pearson(successes: u64, trials: u64, confidence: f64) -> Result<(f64, f64)> {
    if trials == 0 || successes > trials {
        return Err(Error::InvalidArgument(format!("invalid binomial counts {successes}/{trials}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence {confidence} must lie in (0, 1)")));
    }
    let alpha = 1.0 - confidence;
    let (s, n) = (successes as f64, trials as f64);
    let low = if successes == 0 { 0.0 } else { beta_quantile(alpha / 2.0, s, n - s + 1.0)? };
    let high = if successes == trials { 1.0 } else { beta_quantile(1.0 - alpha / 2.0, s + 1.0, n - s)? };
    // bisection slack must not push the bounds past the point estimate
    let point = s / n;
    Ok((low.min(point), high.max(point)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiSettings {
    /// Stop once the interval is shorter than this.
    pub target_length: f64,
    pub confidence: f64,
    pub batch: usize,
    /// Hard bound on the number of draws.
    pub cap: usize,
}

impl Default for CiSettings {
    fn default() -> Self {
        Self { target_length: 0.01, confidence: 0.95, batch: 1000, cap: 2_000_000 }
    }
}

impl CiSettings {
    /// Interval length 0.2% at 95% confidence.
    pub fn paper() -> Self {
        Self { target_length: 0.002, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    TargetReached,
    CapReached,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEstimate {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub successes: u64,
    pub trials: u64,
    pub confidence: f64,
    pub stop: StopReason,
}

/// Draws batches until the interval is short enough or the cap is hit.
/// `draw(k)` evaluates `k` fresh test points and returns how many were correct.
pub fn eval_until_ci<F>(settings: &CiSettings, mut draw: F) -> Result<AccuracyEstimate>
where
    F: FnMut(usize) -> Result<u64>,
{
    if !(settings.target_length > 0.0) || settings.batch == 0 || settings.cap == 0 {
        return Err(Error::InvalidArgument("CI settings need a positive target, batch and cap".into()));
    }
    let (mut successes, mut trials) = (0u64, 0u64);
    loop {
        let k = settings.batch.min(settings.cap - trials as usize);
        let hits = draw(k)?;
        if hits > k as u64 {
            return Err(Error::InvalidArgument(format!("batch of {k} reported {hits} successes")));
        }
        successes += hits;
        trials += k as u64;
        let (ci_low, ci_high) = clopper_pearson(successes, trials, settings.confidence)?;
        let stop = if ci_high - ci_low < settings.target_length {
            Some(StopReason::TargetReached)
        } else if trials as usize >= settings.cap {
            Some(StopReason::CapReached)
        } else {
            None
        };
        if let Some(stop) = stop {
            return Ok(AccuracyEstimate {
                point: successes as f64 / trials as f64,
                ci_low,
                ci_high,
                successes,
                trials,
                confidence: settings.confidence,
                stop,
            });
        }
    }
}

/// Mean and population standard deviation; a single sample has std 0.
pub fn mean_std(samples: &[f64]) -> (f64, f64) {
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_successes() {
        let (lo, hi) = clopper_pearson(0, 10, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.025_f64.powf(0.1))).abs() < 1e-8, "{hi}");
        assert!((hi - 0.3085).abs() < 1e-4);
    }

    #[test]
    fn all_successes_mirror_zero() {
        for n in [1, 7, 50] {
            let (lo0, hi0) = clopper_pearson(0, n, 0.9).unwrap();
            let (lo1, hi1) = clopper_pearson(n, n, 0.9).unwrap();
            assert_eq!(hi1, 1.0);
            assert_eq!(lo0, 0.0);
            assert!((lo1 - (1.0 - hi0)).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_counts() {
        assert!(clopper_pearson(3, 2, 0.95).is_err());
        assert!(clopper_pearson(0, 0, 0.95).is_err());
        assert!(clopper_pearson(1, 2, 1.0).is_err());
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, b) = 1 - (1-x)^b and I_x(a, 1) = x^a
        for &x in &[0.01, 0.3, 0.5, 0.77, 0.99] {
            assert!((regularized_incomplete_beta(x, 1.0, 3.5) - (1.0 - (1.0 - x).powf(3.5))).abs() < 1e-13);
            assert!((regularized_incomplete_beta(x, 2.5, 1.0) - x.powf(2.5)).abs() < 1e-13);
        }
    }

    #[test]
    fn large_counts_converge() {
        let (lo, hi) = clopper_pearson(1_800_000, 2_000_000, 0.95).unwrap();
        assert!(lo < 0.9 && hi > 0.9 && hi - lo < 1e-3, "{lo} {hi}");
    }

    #[test]
    fn immediate_stop() {
        let mut calls = 0;
        let est = eval_until_ci(&CiSettings { target_length: 1.0, ..CiSettings::default() }, |k| {
            calls += 1;
            Ok(k as u64 / 2)
        })
        .unwrap();
        assert_eq!(calls, 1);
        assert_eq!(est.trials, 1000);
        assert_eq!(est.stop, StopReason::TargetReached);
    }

    #[test]
    fn perfect_classifier_stops_quickly() {
        let est = eval_until_ci(&CiSettings { target_length: 0.002, ..CiSettings::default() }, |k| Ok(k as u64)).unwrap();
        assert_eq!(est.point, 1.0);
        assert!(est.trials <= 2000);
    }

    #[test]
    fn cap_stop_is_flagged() {
        let s = CiSettings { target_length: 1e-6, batch: 300, cap: 1000, ..CiSettings::default() };
        let mut sizes = Vec::new();
        let est = eval_until_ci(&s, |k| {
            sizes.push(k);
            Ok(k as u64 / 2)
        })
        .unwrap();
        assert_eq!(sizes, vec![300, 300, 300, 100]);
        assert_eq!(est.stop, StopReason::CapReached);
    }

    #[test]
    fn population_std() {
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
