//! Non-iid distribution of a dataset over network nodes.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};

use super::{LabeledDataset, PartitionPlan};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;

/// Fixed feature-space region layouts for the synthetic processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionScheme {
    /// Vertical strips cut at `x = 0` and `x = 1`.
    Moons3,
    /// Half planes split at `x = 0`.
    Blobs2,
    /// Three 120° angular sectors starting at angle 0.
    Circles3,
}

impl RegionScheme {
    pub fn num_regions(self) -> usize {
        match self {
            Self::Blobs2 => 2,
            _ => 3,
        }
    }

    pub fn region_of(self, x: &[f64]) -> usize {
        match self {
            Self::Moons3 => {
                if x[0] < 0.0 {
                    0
                } else if x[0] < 1.0 {
                    1
                } else {
                    2
                }
            }
            Self::Blobs2 => usize::from(x[0] >= 0.0),
            Self::Circles3 => {
                let angle = x[1].atan2(x[0]).rem_euclid(2.0 * PI);
                ((angle / (2.0 * PI / 3.0)) as usize).min(2)
            }
        }
    }
}

impl fmt::Display for RegionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Moons3 => "moons-3",
            Self::Blobs2 => "blobs-2",
            Self::Circles3 => "circles-3",
        })
    }
}

impl FromStr for RegionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moons-3" => Ok(Self::Moons3),
            "blobs-2" => Ok(Self::Blobs2),
            "circles-3" => Ok(Self::Circles3),
            other => Err(Error::InvalidArgument(format!("unknown region scheme {other:?}"))),
        }
    }
}

impl From<super::SyntheticProcess> for RegionScheme {
    fn from(p: super::SyntheticProcess) -> Self {
        match p {
            super::SyntheticProcess::Moons => Self::Moons3,
            super::SyntheticProcess::Blobs => Self::Blobs2,
            super::SyntheticProcess::Circles => Self::Circles3,
        }
    }
}

pub fn partition_synthetic(data: &LabeledDataset, scheme: RegionScheme) -> Result<PartitionPlan> {
    if data.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: data.dim() });
    }
    let assignments = data.rows().map(|(x, _)| scheme.region_of(x)).collect();
    PartitionPlan::new(assignments, scheme.num_regions())
}

/// Top eigenvector of the (centered) covariance of `rows` by power iteration.
///
/// The start vector is drawn from `seed`. The sign is fixed so the first
/// non-negligible coordinate is positive. A zero covariance yields `e_0`.
pub fn top_principal_direction(rows: &[&[f64]], dim: usize, seed: u64) -> Vec<f64> {
    let n = rows.len();
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);

    let mut cov = vec![0.0; dim * dim];
    for r in rows {
        for i in 0..dim {
            let di = r[i] - mean[i];
            for j in i..dim {
                cov[i * dim + j] += di * (r[j] - mean[j]);
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            cov[i * dim + j] /= n.max(1) as f64;
            cov[j * dim + i] = cov[i * dim + j];
        }
    }

    let mut fallback = vec![0.0; dim];
    fallback[0] = 1.0;
    if cov.iter().all(|&c| c == 0.0) {
        return fallback;
    }

    let mut rng = rng_from_seed(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    if !normalize(&mut v) {
        return fallback;
    }
    let mut next = vec![0.0; dim];
    for _ in 0..POWER_MAX_ITER {
        for i in 0..dim {
            next[i] = (0..dim).map(|j| cov[i * dim + j] * v[j]).sum();
        }
        if !normalize(&mut next) {
            // start vector orthogonal to the range of the covariance
            return fallback;
        }
        fix_sign(&mut next);
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        if delta < POWER_TOL {
            break;
        }
    }
    fix_sign(&mut v);
    v
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

fn fix_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Per class: project on the top principal direction, sort, and deal the
/// sorted run into `m` contiguous chunks (sizes differ by at most one).
/// Chunk `j` goes to node `j`. Ties keep original row order.
pub fn pca_class_split(data: &LabeledDataset, m: usize, seed: u64) -> Result<PartitionPlan> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one node".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.num_classes()];
    for (i, &y) in data.labels().iter().enumerate() {
        by_class[y].push(i);
    }
    if let Some((class, idx)) = by_class.iter().enumerate().find(|(_, idx)| idx.len() < m) {
        return Err(Error::ClassTooSmall { class, count: idx.len(), required: m });
    }

    let mut assignments = vec![0; data.len()];
    for (class, idx) in by_class.iter().enumerate() {
        let rows: Vec<&[f64]> = idx.iter().map(|&i| data.row(i)).collect();
        let dir = top_principal_direction(&rows, data.dim(), crate::rng::derive_seed(seed, "pca", class as u64));
        let mut keyed: Vec<(f64, usize)> = idx
            .iter()
            .zip(&rows)
            .map(|(&i, r)| (r.iter().zip(&dir).map(|(a, b)| a * b).sum(), i))
            .collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let n = keyed.len();
        let (base, extra) = (n / m, n % m);
        let mut pos = 0;
        for node in 0..m {
            let size = base + usize::from(node < extra);
            for &(_, i) in &keyed[pos..pos + size] {
                assignments[i] = node;
            }
            pos += size;
        }
    }
    PartitionPlan::new(assignments, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_blobs, gen_circles, gen_moons};

    #[test]
    fn blobs_split_on_sign_of_first_coordinate() {
        let d = gen_blobs(400, 3).unwrap();
        let p = partition_synthetic(&d, RegionScheme::Blobs2).unwrap();
        for (i, (x, _)) in d.rows().enumerate() {
            assert_eq!(p.assignments()[i] == 0, x[0] < 0.0);
        }
    }

    #[test]
    fn moons_leftmost_strip() {
        assert_eq!(RegionScheme::Moons3.region_of(&[-10.0, 0.0]), 0);
        assert_eq!(RegionScheme::Moons3.region_of(&[0.5, 3.0]), 1);
        assert_eq!(RegionScheme::Moons3.region_of(&[1.0, 0.0]), 2);
    }

    #[test]
    fn circles_sectors() {
        assert_eq!(RegionScheme::Circles3.region_of(&[1.0, 0.1]), 0);
        assert_eq!(RegionScheme::Circles3.region_of(&[-1.0, 0.1]), 1);
        assert_eq!(RegionScheme::Circles3.region_of(&[0.0, -1.0]), 2);
        assert_eq!(RegionScheme::Circles3.region_of(&[1.0, -1e-9]), 2);
    }

    #[test]
    fn synthetic_plans_cover_everything() {
        for (d, s) in [
            (gen_moons(400, 1).unwrap(), RegionScheme::Moons3),
            (gen_circles(400, 1).unwrap(), RegionScheme::Circles3),
            (gen_blobs(400, 1).unwrap(), RegionScheme::Blobs2),
        ] {
            let p = partition_synthetic(&d, s).unwrap();
            assert_eq!(p.num_nodes(), s.num_regions());
            let total: usize = p.members().iter().map(Vec::len).sum();
            assert_eq!(total, d.len());
        }
    }

    #[test]
    fn empty_region_rejected() {
        let d = LabeledDataset::new(vec![-1.0, 0.0, -2.0, 0.0], 2, vec![0, 1], 2).unwrap();
        assert!(matches!(
            partition_synthetic(&d, RegionScheme::Blobs2),
            Err(Error::EmptyRegion { region: 1 })
        ));
    }

    #[test]
    fn single_node_takes_everything() {
        let d = gen_blobs(40, 0).unwrap();
        let p = pca_class_split(&d, 1, 0).unwrap();
        assert!(p.assignments().iter().all(|&a| a == 0));
    }

    #[test]
    fn one_dimensional_sort_and_cut() {
        let d = LabeledDataset::new(vec![3.0, 1.0, 4.0, 2.0, 9.0, 8.0], 1, vec![0, 0, 0, 0, 1, 1], 2)
            .unwrap();
        let p = pca_class_split(&d, 2, 5).unwrap();
        assert_eq!(p.assignments(), &[1, 0, 1, 0, 1, 0]);
    }

    #[test]
    fn chunk_sizes_are_balanced() {
        let d = gen_blobs(400, 8).unwrap();
        let m = 7;
        let p = pca_class_split(&d, m, 2).unwrap();
        let counts = d.class_counts();
        for node in p.members() {
            let mut per_class = vec![0; d.num_classes()];
            for &i in &node {
                per_class[d.label(i)] += 1;
            }
            for (c, &k) in per_class.iter().enumerate() {
                assert!(k == counts[c] / m || k == counts[c].div_ceil(m));
            }
        }
    }

    #[test]
    fn rejects_small_classes() {
        let d = LabeledDataset::new(vec![0.0, 1.0, 2.0], 1, vec![0, 0, 1], 2).unwrap();
        assert!(matches!(
            pca_class_split(&d, 2, 0),
            Err(Error::ClassTooSmall { class: 1, count: 1, required: 2 })
        ));
    }

    #[test]
    fn direction_sign_and_axis() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![0.01 * (i % 3) as f64, -(i as f64)]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let v = top_principal_direction(&refs, 2, 1);
        assert!(v[1].abs() > 0.999);
        assert!(v.iter().find(|x| x.abs() > 1e-12).unwrap() > &0.0);
    }

    #[test]
    fn row_order_does_not_change_node_sets() {
        let d = gen_moons(300, 4).unwrap();
        let p = pca_class_split(&d, 4, 9).unwrap();
        let perm: Vec<usize> = (0..d.len()).rev().collect();
        let shuffled = d.subset(&perm);
        let q = pca_class_split(&shuffled, 4, 9).unwrap();
        for (new_i, &old_i) in perm.iter().enumerate() {
            assert_eq!(q.assignments()[new_i], p.assignments()[old_i]);
        }
    }
}
