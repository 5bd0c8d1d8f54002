//! Synthetic two-dimensional classification processes.
//!
//! Each sampler takes the isotropic noise standard deviation explicitly so
//! tests can switch the noise off.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Noise covariance `0.3 I`.
pub const MOONS_NOISE_STD: f64 = 0.547_722_557_505_166_1;
/// Unit covariance around each corner.
pub const BLOBS_NOISE_STD: f64 = 1.0;
/// A standard deviation of 0.15 (covariance 0.0225 I).
pub const CIRCLES_NOISE_STD: f64 = 0.15;

const BLOB_CORNERS: [([f64; 2], usize); 4] =
    [([-2.0, -2.0], 0), ([2.0, 2.0], 0), ([-2.0, 2.0], 1), ([2.0, -2.0], 2)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticProcess {
    Moons,
    Blobs,
    Circles,
}

impl SyntheticProcess {
    pub const ALL: [SyntheticProcess; 3] = [Self::Moons, Self::Blobs, Self::Circles];

    pub fn default_noise(self) -> f64 {
        match self {
            Self::Moons => MOONS_NOISE_STD,
            Self::Blobs => BLOBS_NOISE_STD,
            Self::Circles => CIRCLES_NOISE_STD,
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            Self::Blobs => 3,
            _ => 2,
        }
    }

    /// Smallest valid sample size unit (samples must be a multiple of it).
    pub fn granularity(self) -> usize {
        match self {
            Self::Blobs => 4,
            _ => 2,
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, n: usize, noise_std: f64, rng: &mut R) -> Result<LabeledDataset> {
        match self {
            Self::Moons => sample_moons(n, noise_std, rng),
            Self::Blobs => sample_blobs(n, noise_std, rng),
            Self::Circles => sample_circles(n, noise_std, rng),
        }
    }

    pub fn generate(self, n: usize, seed: u64) -> Result<LabeledDataset> {
        self.sample(n, self.default_noise(), &mut rng_from_seed(seed))
    }
}

impl fmt::Display for SyntheticProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Moons => "moons",
            Self::Blobs => "blobs",
            Self::Circles => "circles",
        })
    }
}

impl FromStr for SyntheticProcess {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "moons" => Ok(Self::Moons),
            "blobs" => Ok(Self::Blobs),
            "circles" => Ok(Self::Circles),
            other => Err(Error::InvalidArgument(format!("unknown synthetic process {other:?}"))),
        }
    }
}

fn check_size(n: usize, unit: usize, what: &str) -> Result<()> {
    if n < unit || n % unit != 0 {
        return Err(Error::InvalidArgument(format!(
            "{what} needs a positive multiple of {unit} points, got {n}"
        )));
    }
    Ok(())
}

fn noisy<R: Rng + ?Sized>(x: f64, y: f64, sd: f64, rng: &mut R, out: &mut Vec<f64>) {
    let ex: f64 = rng.sample(StandardNormal);
    let ey: f64 = rng.sample(StandardNormal);
    out.push(x + sd * ex);
    out.push(y + sd * ey);
}

/// Two interleaved half circles of radius 1, the first centered at the
/// origin (upper half), the second at `(1, 0)` (lower half). Angles are uniform.
pub fn sample_moons<R: Rng + ?Sized>(n: usize, noise_std: f64, rng: &mut R) -> Result<LabeledDataset> {
    check_size(n, 2, "moons")?;
    let half = n / 2;
    let mut feats = Vec::with_capacity(2 * n);
    for _ in 0..half {
        let t = rng.random_range(0.0..=PI);
        noisy(t.cos(), t.sin(), noise_std, rng, &mut feats);
    }
    for _ in 0..half {
        let t = rng.random_range(PI..=2.0 * PI);
        noisy(1.0 + t.cos(), t.sin(), noise_std, rng, &mut feats);
    }
    let labels = (0..n).map(|i| usize::from(i >= half)).collect();
    LabeledDataset::new(feats, 2, labels, 2)
}

/// Four unit-covariance Gaussians on the corners of a square of edge 4.
/// The diagonal corners `(-2,-2)` and `(2,2)` share class 0.
pub fn sample_blobs<R: Rng + ?Sized>(n: usize, noise_std: f64, rng: &mut R) -> Result<LabeledDataset> {
    check_size(n, 4, "blobs")?;
    let quarter = n / 4;
    let mut feats = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for ([cx, cy], class) in BLOB_CORNERS {
        for _ in 0..quarter {
            noisy(cx, cy, noise_std, rng, &mut feats);
            labels.push(class);
        }
    }
    LabeledDataset::new(feats, 2, labels, 3)
}

/// Two concentric circles sampled with a fixed angle step: radius 1 is
/// class 0, radius 0.5 is class 1.
pub fn sample_circles<R: Rng + ?Sized>(n: usize, noise_std: f64, rng: &mut R) -> Result<LabeledDataset> {
    check_size(n, 2, "circles")?;
    let half = n / 2;
    let step = 2.0 * PI / half as f64;
    let mut feats = Vec::with_capacity(2 * n);
    for radius in [1.0, 0.5] {
        for i in 0..half {
            let t = step * i as f64;
            noisy(radius * t.cos(), radius * t.sin(), noise_std, rng, &mut feats);
        }
    }
    let labels = (0..n).map(|i| usize::from(i >= half)).collect();
    LabeledDataset::new(feats, 2, labels, 2)
}

pub fn gen_moons(n: usize, seed: u64) -> Result<LabeledDataset> {
    SyntheticProcess::Moons.generate(n, seed)
}

pub fn gen_blobs(n: usize, seed: u64) -> Result<LabeledDataset> {
    SyntheticProcess::Blobs.generate(n, seed)
}

pub fn gen_circles(n: usize, seed: u64) -> Result<LabeledDataset> {
    SyntheticProcess::Circles.generate(n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radius(x: &[f64]) -> f64 {
        x[0].hypot(x[1])
    }

    #[test]
    fn moons_balanced() {
        let d = gen_moons(400, 1).unwrap();
        assert_eq!(d.class_counts(), vec![200, 200]);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.num_classes(), 2);
    }

    #[test]
    fn moons_rejects_odd_or_tiny() {
        assert!(gen_moons(401, 0).is_err());
        assert!(gen_moons(0, 0).is_err());
        assert!(gen_circles(3, 0).is_err());
        assert!(gen_blobs(402, 0).is_err());
    }

    #[test]
    fn noiseless_moons_lie_on_half_circles() {
        let d = sample_moons(200, 0.0, &mut rng_from_seed(5)).unwrap();
        for (x, y) in d.rows() {
            if y == 0 {
                assert!((x[0] * x[0] + x[1] * x[1] - 1.0).abs() < 1e-9);
                assert!(x[1] >= -1e-12);
            } else {
                assert!(((x[0] - 1.0).powi(2) + x[1] * x[1] - 1.0).abs() < 1e-9);
                assert!(x[1] <= 1e-12);
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        for p in SyntheticProcess::ALL {
            assert_eq!(p.generate(40, 9).unwrap(), p.generate(40, 9).unwrap());
            assert_ne!(p.generate(40, 9).unwrap(), p.generate(40, 10).unwrap());
        }
    }

    #[test]
    fn blobs_class_sizes() {
        let d = gen_blobs(400, 2).unwrap();
        assert_eq!(d.class_counts(), vec![200, 100, 100]);
    }

    #[test]
    fn noiseless_blobs_are_the_corners() {
        let d = sample_blobs(40, 0.0, &mut rng_from_seed(0)).unwrap();
        let mut pts: Vec<(i64, i64)> = d.rows().map(|(x, _)| (x[0] as i64, x[1] as i64)).collect();
        pts.sort_unstable();
        pts.dedup();
        assert_eq!(pts, vec![(-2, -2), (-2, 2), (2, -2), (2, 2)]);
    }

    #[test]
    fn blob_class_means_converge() {
        let d = gen_blobs(40_000, 17).unwrap();
        let (mut sx, mut sy, mut c) = (0.0, 0.0, 0.0);
        for (x, y) in d.rows() {
            if y == 1 {
                sx += x[0];
                sy += x[1];
                c += 1.0;
            }
        }
        assert!((sx / c + 2.0).abs() < 0.05);
        assert!((sy / c - 2.0).abs() < 0.05);
    }

    #[test]
    fn noiseless_circles_radii_and_step() {
        let n = 400;
        let d = sample_circles(n, 0.0, &mut rng_from_seed(0)).unwrap();
        assert_eq!(d.class_counts(), vec![200, 200]);
        for (x, y) in d.rows() {
            let want = if y == 0 { 1.0 } else { 0.5 };
            assert!((radius(x) - want).abs() < 1e-9);
        }
        let step = 2.0 * PI / (n / 2) as f64;
        for i in 0..(n / 2 - 1) {
            let a = d.row(i);
            let b = d.row(i + 1);
            let cos = (a[0] * b[0] + a[1] * b[1]) / (radius(a) * radius(b));
            assert!((cos.clamp(-1.0, 1.0).acos() - step).abs() < 1e-9);
        }
    }
}
