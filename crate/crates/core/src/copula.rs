//! Standard-normal quantile and the equicorrelation Gaussian copula.
//!
//! With `R = λ·11ᵀ + (1-λ)·I` of size `m`, the copula log-density is
//!
//! ```text
//! ln c(u) = -½ ln det R - ½ vᵀ (R⁻¹ - I) v,    v_k = Q(u_k)
//! det R   = (1-λ)^(m-1) · (1+(m-1)λ)
//! R⁻¹     = (I - λ/(1+(m-1)λ) · 11ᵀ) / (1-λ)
//! ```
//!
//! so it only depends on `Σ v_k` and `Σ v_k²`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped into `[ε, 1-ε]` before the quantile transform.
pub const U_CLAMP: f64 = 1e-12;

/// Grid endpoints sit this fraction of the interval width inside the open bounds.
pub const GRID_SHRINK: f64 = 1e-3;

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

// Wichura, Algorithm AS 241 (PPND16), coefficients low order first.
const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    133.141_667_891_784_377_45,
    1_971.590_950_306_551_442_7,
    13_731.693_765_509_461_125,
    45_921.953_931_549_871_457,
    67_265.770_927_008_700_853,
    33_430.575_583_588_128_105,
    2_509.080_928_730_122_672_7,
];
const B: [f64; 8] = [
    1.0,
    42.313_330_701_600_911_252,
    687.187_007_492_057_908_3,
    5_394.196_021_424_751_107_7,
    21_213.794_301_586_595_867,
    39_307.895_800_092_710_61,
    28_729.085_735_721_942_674,
    5_226.495_278_852_545_925,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    0.241_780_725_177_450_611_77,
    0.022_723_844_989_269_184_583_3,
    7.745_450_142_783_414_076_4e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    0.689_767_334_985_100_004_55,
    0.148_103_976_427_480_074_59,
    0.015_198_666_563_616_457_196_6,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    0.296_560_571_828_504_891_23,
    0.026_532_189_526_576_123_093,
    0.001_242_660_947_388_078_438_6,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const F: [f64; 8] = [
    1.0,
    0.599_832_206_555_887_937_69,
    0.136_929_880_922_735_805_31,
    0.014_875_361_290_850_614_852_5,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

/// Rational approximation for `p <= 0.5`.
fn ppnd16_lower(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = (-p.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    -val
}

fn lower_tail_quantile(p: f64) -> f64 {
    let x = ppnd16_lower(p);
    x - (std_normal_cdf(x) - p) / std_normal_pdf(x)
}

/// Quantile function of the standard normal distribution.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    Ok(if p < 0.5 {
        lower_tail_quantile(p)
    } else if p > 0.5 {
        // 1 - p is exact for p in [0.5, 1]
        -lower_tail_quantile(1.0 - p)
    } else {
        0.0
    })
}

/// `Q(clamp(u))`, total over `[0, 1]`.
pub fn clamped_normal_score(u: f64) -> f64 {
    let u = if u.is_nan() { 0.5 } else { u.clamp(U_CLAMP, 1.0 - U_CLAMP) };
    std_normal_quantile(u).expect("clamped probability is inside (0, 1)")
}

/// Gaussian copula whose correlation matrix has unit diagonal and a
/// constant off-diagonal `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquicorrelationCopula {
    lambda: f64,
    arity: usize,
    half_log_det: f64,
    inv_scale: f64,
    rank_one: f64,
}

impl EquicorrelationCopula {
    /// Open lower bound `-1/(m-1)` of valid correlations for `m` variables.
    pub fn lower_bound(arity: usize) -> f64 {
        -1.0 / (arity as f64 - 1.0)
    }

    pub fn is_valid(lambda: f64, arity: usize) -> bool {
        arity >= 2 && lambda > Self::lower_bound(arity) && lambda < 1.0
    }

    pub fn new(lambda: f64, arity: usize) -> Result<Self> {
        if arity < 2 {
            return Err(Error::InvalidArgument(format!("copula arity must be at least 2, got {arity}")));
        }
        if !Self::is_valid(lambda, arity) {
            return Err(Error::InvalidLambda { lambda, lower: Self::lower_bound(arity), arity });
        }
        let m1 = (arity - 1) as f64;
        let half_log_det = 0.5 * (m1 * (-lambda).ln_1p() + (m1 * lambda).ln_1p());
        Ok(Self {
            lambda,
            arity,
            half_log_det,
            inv_scale: 1.0 / (1.0 - lambda),
            rank_one: lambda / (1.0 + m1 * lambda),
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// `ln det R`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.half_log_det
    }

    /// Entry `(i, j)` of `R⁻¹`.
    pub fn inverse_entry(&self, i: usize, j: usize) -> f64 {
        self.inv_scale * (f64::from(u8::from(i == j)) - self.rank_one)
    }

    /// Log-density from `Σ v_k` and `Σ v_k²` of the normal scores.
    #[inline]
    pub fn log_density_from_sums(&self, sum: f64, sum_sq: f64) -> f64 {
        if self.lambda == 0.0 {
            return 0.0;
        }
        -self.half_log_det - 0.5 * (self.inv_scale * (sum_sq - self.rank_one * sum * sum) - sum_sq)
    }

    /// Log-density at normal scores `v = Q(u)`.
    pub fn log_density_scores(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.arity {
            return Err(Error::DimensionMismatch { expected: self.arity, found: v.len() });
        }
        let (s1, s2) = v.iter().fold((0.0, 0.0), |(a, b), &x| (a + x, b + x * x));
        let out = self.log_density_from_sums(s1, s2);
        if !out.is_finite() {
            return Err(Error::NonFiniteDensity);
        }
        Ok(out)
    }

    /// Log-density at `u ∈ [0,1]^m`; entries are clamped into `[ε, 1-ε]`.
    pub fn log_density(&self, u: &[f64]) -> Result<f64> {
        let v: Vec<f64> = u.iter().map(|&x| clamped_normal_score(x)).collect();
        self.log_density_scores(&v)
    }
}

pub fn equicorr_copula_logdensity(lambda: f64, u: &[f64]) -> Result<f64> {
    EquicorrelationCopula::new(lambda, u.len())?.log_density(u)
}

/// Evenly spaced candidate correlations strictly inside `(-1/(m-1), 1)`,
/// with `0` inserted when absent. Sorted ascending.
pub fn lambda_grid(m: usize, points: usize) -> Result<Vec<f64>> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("grid needs m >= 2, got {m}")));
    }
    if points < 2 {
        return Err(Error::InvalidArgument(format!("grid needs at least 2 points, got {points}")));
    }
    let lower = EquicorrelationCopula::lower_bound(m);
    let shrink = GRID_SHRINK * (1.0 - lower);
    let (a, b) = (lower + shrink, 1.0 - shrink);
    let step = (b - a) / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points)
        .map(|i| if i + 1 == points { b } else { a + step * i as f64 })
        .map(|v| if v.abs() < 1e-12 { 0.0 } else { v })
        .collect();
    if !grid.contains(&0.0) {
        grid.push(0.0);
        grid.sort_by(f64::total_cmp);
    }
    Ok(grid)
}
