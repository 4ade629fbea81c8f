//! SMOTE oversampling of the minority class.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Minority/majority ratio after augmentation.
    pub target_ratio: f64,
    pub seed: u64,
    /// Scale each feature to unit variance before computing distances.
    pub standardize: bool,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig {
            k_neighbors: 5,
            target_ratio: 1.0,
            seed: 0,
            standardize: false,
        }
    }
}

impl SmoteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(Error::config("smote.k_neighbors", "must be >= 1"));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(Error::config("smote.target_ratio", "must be in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SmoteOutput {
    /// Original rows in input order followed by the synthetic rows.
    pub data: Dataset,
    pub n_original: usize,
    /// For each synthetic row, the input row indices it interpolates.
    pub parents: Vec<(usize, usize)>,
}

/// Indices of the `k` nearest other rows of `points` to row `i`, ties broken
/// by lower index.
fn nearest(points: &Array2<f64>, i: usize, k: usize) -> Vec<usize> {
    let x = points.row(i);
    let mut d: Vec<(f64, usize)> = points
        .axis_iter(Axis(0))
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, z)| (x.iter().zip(z.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), j))
        .collect();
    let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < d.len() {
        d.select_nth_unstable_by(k - 1, by_distance);
        d.truncate(k);
    }
    d.sort_by(by_distance);
    d.into_iter().map(|(_, j)| j).collect()
}

/// Oversamples the smaller class (OUD on a tie) until it holds
/// `floor(target_ratio * majority)` rows.
pub fn smote(data: &Dataset, config: &SmoteConfig) -> Result<SmoteOutput> {
    config.validate()?;
    if data.n_rows() == 0 {
        return Err(Error::InvalidInput("cannot oversample an empty matrix".into()));
    }
    let n_pos = data.n_positive();
    let n_neg = data.n_rows() - n_pos;
    let minority_label = n_pos <= n_neg;
    let minority: Vec<usize> = (0..data.n_rows()).filter(|&i| data.y[i] == minority_label).collect();
    let majority = data.n_rows() - minority.len();
    let m = minority.len();
    if m < 2 {
        return Err(Error::MinorityTooSmall(m));
    }
    let target = (config.target_ratio * majority as f64).floor() as usize;
    let needed = target.saturating_sub(m);
    let d = data.n_features();

    let mut points = data.x.select(Axis(0), &minority);
    if config.standardize {
        let all = &data.x;
        for (j, mut col) in points.axis_iter_mut(Axis(1)).enumerate() {
            let sd = all.column(j).std(0.0);
            if sd > 0.0 {
                col.mapv_inplace(|v| v / sd);
            }
        }
    }
    let k = config.k_neighbors.min(m - 1);
    let neighbors: Vec<Vec<usize>> = if needed > 0 {
        (0..m).into_par_iter().map(|i| nearest(&points, i, k)).collect()
    } else {
        Vec::new()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut x = Array2::zeros((data.n_rows() + needed, d));
    x.slice_mut(ndarray::s![..data.n_rows(), ..]).assign(&data.x);
    let mut parents = Vec::with_capacity(needed);
    for s in 0..needed {
        let a = rng.random_range(0..m);
        let b = neighbors[a][rng.random_range(0..k)];
        let g: f64 = rng.random();
        let (xa, xb) = (data.x.row(minority[a]), data.x.row(minority[b]));
        let mut out = x.row_mut(data.n_rows() + s);
        for j in 0..d {
            let (lo, hi) = if xa[j] <= xb[j] { (xa[j], xb[j]) } else { (xb[j], xa[j]) };
            out[j] = (xa[j] + g * (xb[j] - xa[j])).clamp(lo, hi);
        }
        parents.push((minority[a], minority[b]));
    }
    let mut y = data.y.clone();
    y.resize(data.n_rows() + needed, minority_label);
    Ok(SmoteOutput {
        data: Dataset::new(x, y, data.features.clone())?,
        n_original: data.n_rows(),
        parents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ds(x: Array2<f64>, y: Vec<bool>) -> Dataset {
        let names = (0..x.ncols()).map(|j| format!("f{j}")).collect();
        Dataset::new(x, y, names).unwrap()
    }

    #[test]
    fn two_point_minority_stays_on_segment() {
        let mut rows = vec![[0.0, 0.0], [1.0, 1.0]];
        rows.extend(std::iter::repeat_n([5.0, -3.0], 20));
        let x = Array2::from_shape_vec((22, 2), rows.concat()).unwrap();
        let mut y = vec![true, true];
        y.extend([false; 20]);
        let cfg = SmoteConfig {
            k_neighbors: 1,
            ..Default::default()
        };
        let out = smote(&ds(x, y), &cfg).unwrap();
        assert_eq!(out.data.n_positive(), 20);
        for i in 22..out.data.n_rows() {
            let r = out.data.x.row(i);
            assert_eq!(r[0], r[1]);
            assert!((0.0..=1.0).contains(&r[0]));
        }
    }

    #[test]
    fn identical_minority_copies() {
        let x = array![[2.0, 3.0], [2.0, 3.0], [2.0, 3.0], [0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [9.0, 9.0]];
        let y = vec![true, true, true, false, false, false, false];
        let out = smote(&ds(x, y), &SmoteConfig::default()).unwrap();
        assert_eq!(out.data.n_rows(), 8);
        assert_eq!(out.data.x.row(7).to_vec(), vec![2.0, 3.0]);
    }

    #[test]
    fn counts_and_preservation() {
        let n = 1000;
        let x = Array2::from_shape_fn((n, 3), |(i, j)| ((i * 7 + j * 13) % 11) as f64);
        let y: Vec<bool> = (0..n).map(|i| i % 100 == 0).collect();
        let data = ds(x, y);
        let out = smote(&data, &SmoteConfig::default()).unwrap();
        assert_eq!(out.data.n_positive(), 990);
        assert_eq!(out.data.n_rows() - out.data.n_positive(), 990);
        assert_eq!(out.data.x.slice(ndarray::s![..n, ..]), data.x);
        assert_eq!(&out.data.y[..n], &data.y[..]);
    }

    #[test]
    fn partial_ratio_and_no_op() {
        let x = Array2::from_shape_fn((110, 1), |(i, _)| i as f64);
        let y: Vec<bool> = (0..110).map(|i| i < 10).collect();
        let cfg = SmoteConfig {
            target_ratio: 0.5,
            ..Default::default()
        };
        let out = smote(&ds(x.clone(), y.clone()), &cfg).unwrap();
        assert_eq!(out.data.n_positive(), 50);
        let cfg = SmoteConfig {
            target_ratio: 0.05,
            ..Default::default()
        };
        assert_eq!(smote(&ds(x, y), &cfg).unwrap().data.n_rows(), 110);
    }

    #[test]
    fn errors() {
        let x = array![[0.0], [1.0], [2.0]];
        assert!(matches!(
            smote(&ds(x, vec![true, false, false]), &SmoteConfig::default()),
            Err(Error::MinorityTooSmall(1))
        ));
        let bad = SmoteConfig {
            target_ratio: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn neighbor_ties_prefer_lower_index() {
        let pts = array![[0.0], [1.0], [-1.0], [1.0]];
        assert_eq!(nearest(&pts, 0, 2), vec![1, 2]);
    }
}
