use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::logistic::sigmoid;
use super::tree::{grow, normalize, Criterion, MaxFeatures, Presorted, Tree, TreeParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostingParams {
    pub n_stages: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub learning_rate: f64,
}

impl Default for BoostingParams {
    fn default() -> Self {
        BoostingParams {
            n_stages: 100,
            max_depth: 3,
            min_leaf: 1,
            learning_rate: 0.1,
        }
    }
}

impl BoostingParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if self.n_stages == 0 {
            return Err(Error::config(format!("{prefix}.n_stages"), "must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::config(format!("{prefix}.learning_rate"), "must be in (0, 1]"));
        }
        self.tree_params().validate(prefix)
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            max_features: MaxFeatures::All,
            seed: 0,
        }
    }
}

/// Log-loss of one row at score `f`.
fn row_loss(f: f64, y: bool) -> f64 {
    let z = if y { -f } else { f };
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn mean_loss(scores: &[f64], y: &[bool]) -> f64 {
    scores.iter().zip(y).map(|(&f, &yi)| row_loss(f, yi)).sum::<f64>() / y.len() as f64
}

pub(crate) struct BoostingFit {
    pub init: f64,
    pub trees: Vec<Tree>,
    pub importance: Vec<f64>,
    /// Mean training log-loss before the first stage and after each stage.
    pub loss_trace: Vec<f64>,
}

/// Gradient boosting on log-loss. Each stage fits a squared-error tree to the
/// residuals `y - p` and replaces leaf values with a damped Newton step,
/// halved until the leaf's loss does not increase.
pub(crate) fn fit(x: &Array2<f64>, y: &[bool], params: &BoostingParams) -> BoostingFit {
    let n = x.nrows();
    let sorted = Presorted::new(x);
    let prior = y.iter().filter(|&&v| v).count() as f64 / n as f64;
    let init = (prior / (1.0 - prior)).ln();
    let mut scores = vec![init; n];
    let mut loss = mean_loss(&scores, y);
    let mut trace = vec![loss];
    let mut trees = Vec::with_capacity(params.n_stages);
    let mut gains = vec![0.0; x.ncols()];
    let weight = vec![1.0; n];
    let tp = params.tree_params();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..params.n_stages {
        let residual: Vec<f64> = scores
            .iter()
            .zip(y)
            .map(|(&f, &yi)| (if yi { 1.0 } else { 0.0 }) - sigmoid(f))
            .collect();
        let mut grown = grow(x, &sorted, &residual, &weight, &tp, Criterion::Squared, &mut rng);
        let n_nodes = grown.tree.nodes.len();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
        for (r, leaf) in grown.leaf_of.iter().enumerate() {
            if let Some(l) = leaf {
                members[*l].push(r);
            }
        }
        for (leaf, rows) in members.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for &r in rows {
                let p = sigmoid(scores[r]);
                num += residual[r];
                den += p * (1.0 - p);
            }
            let before: f64 = rows.iter().map(|&r| row_loss(scores[r], y[r])).sum();
            let mut step = if den > 1e-12 { params.learning_rate * num / den } else { 0.0 };
            let mut halvings = 0;
            while step != 0.0 {
                let after: f64 = rows.iter().map(|&r| row_loss(scores[r] + step, y[r])).sum();
                if after <= before {
                    break;
                }
                halvings += 1;
                step = if halvings >= 60 { 0.0 } else { step / 2.0 };
            }
            grown.tree.nodes[leaf].value = step;
        }
        let mut step_scale = 1.0;
        let mut next: Vec<f64>;
        loop {
            next = (0..n)
                .map(|r| match grown.leaf_of[r] {
                    Some(l) => scores[r] + step_scale * grown.tree.nodes[l].value,
                    None => scores[r],
                })
                .collect();
            // Per-leaf decreases can be lost to summation order; shrink the
            // whole stage until the reported mean loss does not rise.
            let next_loss = mean_loss(&next, y);
            if next_loss <= loss || step_scale == 0.0 {
                loss = next_loss;
                break;
            }
            step_scale = if step_scale < 1e-12 { 0.0 } else { step_scale / 2.0 };
        }
        if step_scale != 1.0 {
            for node in grown.tree.nodes.iter_mut().filter(|n| n.feature.is_none()) {
                node.value *= step_scale;
            }
        }
        scores = next;
        trace.push(loss);
        for (a, b) in gains.iter_mut().zip(&grown.gains) {
            *a += b;
        }
        trees.push(grown.tree);
    }
    normalize(&mut gains);
    BoostingFit {
        init,
        trees,
        importance: gains,
        loss_trace: trace,
    }
}

pub(crate) fn score(init: f64, trees: &[Tree], row: &[f64]) -> f64 {
    trees.iter().fold(init, |acc, t| acc + t.predict(row))
}
