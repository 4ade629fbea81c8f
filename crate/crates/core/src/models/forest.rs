use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, normalize, Criterion, MaxFeatures, Presorted, Tree, TreeParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            // Shallower and coarser than a lone tree; deep trees carve out
            // individual SMOTE rows.
            max_depth: 8,
            min_leaf: 50,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::config(format!("{prefix}.n_trees"), "must be >= 1"));
        }
        self.tree_params(0).validate(prefix)
    }

    fn tree_params(&self, seed: u64) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            max_features: self.max_features,
            seed,
        }
    }
}

/// Trees are grown in parallel, each from its own ChaCha stream, so the
/// result does not depend on scheduling.
pub(crate) fn fit(x: &Array2<f64>, y: &[bool], params: &ForestParams) -> (Vec<Tree>, Vec<f64>) {
    let n = x.nrows();
    let sorted = Presorted::new(x);
    let target: Vec<f64> = y.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let tp = params.tree_params(params.seed);
    let grown: Vec<_> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let mut weight = vec![0.0; n];
            if params.bootstrap {
                for _ in 0..n {
                    weight[rng.random_range(0..n)] += 1.0;
                }
            } else {
                weight.fill(1.0);
            }
            grow(x, &sorted, &target, &weight, &tp, Criterion::Gini, &mut rng)
        })
        .collect();
    let mut importance = vec![0.0; x.ncols()];
    let trees = grown
        .into_iter()
        .map(|g| {
            for (a, b) in importance.iter_mut().zip(&g.gains) {
                *a += b;
            }
            g.tree
        })
        .collect();
    normalize(&mut importance);
    (trees, importance)
}
