//! CART trees grown level by level over presorted feature columns.
//!
//! One builder serves classification (Gini impurity on 0/1 targets, leaves
//! hold the weighted positive fraction) and regression (squared error on real
//! targets, used by boosting).

use ndarray::Array2;
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::All => d,
            MaxFeatures::Sqrt => ((d as f64).sqrt().round() as usize).clamp(1, d.max(1)),
            MaxFeatures::Count(m) => m.clamp(1, d.max(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub max_features: MaxFeatures,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 12,
            min_leaf: 5,
            max_features: MaxFeatures::All,
            seed: 0,
        }
    }
}

impl TreeParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::config(format!("{prefix}.max_depth"), "must be >= 1"));
        }
        if self.min_leaf == 0 {
            return Err(Error::config(format!("{prefix}.min_leaf"), "must be >= 1"));
        }
        if self.max_features == MaxFeatures::Count(0) {
            return Err(Error::config(format!("{prefix}.max_features"), "must be >= 1"));
        }
        Ok(())
    }
}

/// A node; leaves have `feature == None`. Rows with `x[feature] <= threshold`
/// go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<usize>,
    #[serde(default)]
    pub threshold: f64,
    #[serde(default)]
    pub left: usize,
    #[serde(default)]
    pub right: usize,
    pub value: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        while let Some(f) = self.nodes[i].feature {
            let n = &self.nodes[i];
            i = if row[f] <= n.threshold { n.left } else { n.right };
        }
        i
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.nodes[self.leaf_index(row)].value
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i].feature {
                None => 0,
                Some(_) => 1 + walk(nodes, nodes[i].left).max(walk(nodes, nodes[i].right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.feature.is_none()).count()
    }
}

/// Nonzero entries of one feature, ascending by value then row. Zeros are
/// implicit and handled as a single block between the two halves.
#[derive(Clone, Default)]
struct SortedColumn {
    neg: Vec<(u32, f64)>,
    pos: Vec<(u32, f64)>,
}

impl SortedColumn {
    fn retain(&mut self, keep: impl Fn(u32) -> bool) {
        self.neg.retain(|(r, _)| keep(*r));
        self.pos.retain(|(r, _)| keep(*r));
    }
}

pub(crate) struct Presorted {
    columns: Vec<SortedColumn>,
}

impl Presorted {
    pub(crate) fn new(x: &Array2<f64>) -> Self {
        let columns = (0..x.ncols())
            .map(|j| {
                let mut col: Vec<(u32, f64)> = x
                    .column(j)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(i, &v)| (i as u32, v))
                    .collect();
                col.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                let split = col.partition_point(|&(_, v)| v < 0.0);
                let pos = col.split_off(split);
                SortedColumn { neg: col, pos }
            })
            .collect();
        Presorted { columns }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Criterion {
    Gini,
    Squared,
}

impl Criterion {
    /// Node score whose decrease is the split gain: weighted Gini impurity,
    /// or minus the between-group sum of squares.
    fn impurity(self, w: f64, s: f64) -> f64 {
        match self {
            Criterion::Gini => 2.0 * s * (w - s) / w,
            Criterion::Squared => -s * s / w,
        }
    }
}

pub(crate) struct Grown {
    pub tree: Tree,
    /// Final node of each training row; `None` for zero-weight rows.
    pub leaf_of: Vec<Option<usize>>,
    /// Unnormalized impurity decrease per feature.
    pub gains: Vec<f64>,
}

struct RowState {
    w: f64,
    /// Weight times target.
    wt: f64,
    node: u32,
}

#[derive(Clone, Copy)]
struct Open {
    id: usize,
    w: f64,
    s: f64,
    /// Rows with positive weight.
    count: usize,
    depth: usize,
}

#[derive(Clone, Copy)]
struct Scan {
    wl: f64,
    sl: f64,
    last: f64,
    seen: bool,
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Scan {
    fn fresh() -> Self {
        Scan {
            wl: 0.0,
            sl: 0.0,
            last: 0.0,
            seen: false,
            gain: f64::NEG_INFINITY,
            feature: usize::MAX,
            threshold: 0.0,
        }
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

/// Grows one tree on rows with positive `weight`; `target` is 0/1 for Gini
/// and a real residual for squared error.
pub(crate) fn grow(
    x: &Array2<f64>,
    sorted: &Presorted,
    target: &[f64],
    weight: &[f64],
    params: &TreeParams,
    criterion: Criterion,
    rng: &mut ChaCha8Rng,
) -> Grown {
    let (n, d) = x.dim();
    let min_leaf = params.min_leaf as f64;
    let m_try = params.max_features.resolve(d);
    let mut state: Vec<RowState> = (0..n)
        .map(|r| RowState {
            w: weight[r],
            wt: weight[r] * target[r],
            node: if weight[r] > 0.0 { 0 } else { NONE },
        })
        .collect();
    let mut leaf_of = vec![None; n];
    let (mut w0, mut s0, mut c0) = (0.0, 0.0, 0usize);
    for st in state.iter().filter(|st| st.node == 0) {
        w0 += st.w;
        s0 += st.wt;
        c0 += 1;
    }
    // Working copies of the sorted columns; rows leave them once they reach
    // a leaf so deep levels scan only what is still open.
    let mut columns: Vec<SortedColumn> = sorted.columns.clone();
    if c0 < n {
        for col in columns.iter_mut() {
            col.retain(|r| state[r as usize].node == 0);
        }
    }
    let mut active = c0;
    let mut finished = 0;
    let mut nodes = vec![Node {
        feature: None,
        threshold: 0.0,
        left: 0,
        right: 0,
        value: if w0 > 0.0 { s0 / w0 } else { 0.0 },
        weight: w0,
    }];
    let mut gains = vec![0.0; d];
    let mut level = vec![Open {
        id: 0,
        w: w0,
        s: s0,
        count: c0,
        depth: 0,
    }];

    while !level.is_empty() {
        let base = level[0].id;
        let splittable: Vec<bool> = level
            .iter()
            .map(|o| {
                o.depth < params.max_depth
                    && o.w >= 2.0 * min_leaf
                    && (criterion == Criterion::Squared || (o.s > 0.0 && o.s < o.w))
            })
            .collect();
        let mut mask = vec![m_try == d; level.len() * d];
        if m_try < d {
            for (slot, _) in splittable.iter().enumerate().filter(|(_, &s)| s) {
                for f in sample(rng, d, m_try) {
                    mask[slot * d + f] = true;
                }
            }
        }
        let mut best = vec![Scan::fresh(); level.len()];
        let mut scan = vec![Scan::fresh(); level.len()];
        let mut nonzero = vec![(0.0, 0.0, 0usize); level.len()];
        for f in 0..d {
            let live = |slot: usize| splittable[slot] && mask[slot * d + f];
            if !(0..level.len()).any(live) {
                continue;
            }
            let col = &columns[f];
            for st in scan.iter_mut() {
                *st = Scan::fresh();
            }
            for z in nonzero.iter_mut() {
                *z = (0.0, 0.0, 0);
            }
            for &(r, _) in col.neg.iter().chain(&col.pos) {
                let row = &state[r as usize];
                if row.node != NONE {
                    let z = &mut nonzero[row.node as usize - base];
                    z.0 += row.w;
                    z.1 += row.wt;
                    z.2 += 1;
                }
            }
            let mut visit = |slot: usize, v: f64, w: f64, wt: f64| {
                let st = &mut scan[slot];
                if st.seen && v > st.last {
                    let o = &level[slot];
                    let (wr, sr) = (o.w - st.wl, o.s - st.sl);
                    if st.wl >= min_leaf && wr >= min_leaf {
                        let gain =
                            criterion.impurity(o.w, o.s) - criterion.impurity(st.wl, st.sl) - criterion.impurity(wr, sr);
                        let b = &mut best[slot];
                        if gain > b.gain {
                            b.gain = gain;
                            b.feature = f;
                            b.threshold = midpoint(st.last, v);
                        }
                    }
                }
                st.wl += w;
                st.sl += wt;
                st.last = v;
                st.seen = true;
            };
            for &(r, v) in &col.neg {
                let row = &state[r as usize];
                if row.node != NONE && live(row.node as usize - base) {
                    visit(row.node as usize - base, v, row.w, row.wt);
                }
            }
            for (slot, o) in level.iter().enumerate() {
                let (wn, sn, cn) = nonzero[slot];
                if cn < o.count && live(slot) {
                    visit(slot, 0.0, o.w - wn, o.s - sn);
                }
            }
            for &(r, v) in &col.pos {
                let row = &state[r as usize];
                if row.node != NONE && live(row.node as usize - base) {
                    visit(row.node as usize - base, v, row.w, row.wt);
                }
            }
        }

        // Children get consecutive ids so the next level is a contiguous range.
        let mut child_of = vec![None; level.len()];
        for (slot, b) in best.iter().enumerate() {
            if b.feature == usize::MAX {
                continue;
            }
            let left = nodes.len();
            for _ in 0..2 {
                nodes.push(Node {
                    feature: None,
                    threshold: 0.0,
                    left: 0,
                    right: 0,
                    value: 0.0,
                    weight: 0.0,
                });
            }
            let id = level[slot].id;
            nodes[id].feature = Some(b.feature);
            nodes[id].threshold = b.threshold;
            nodes[id].left = left;
            nodes[id].right = left + 1;
            gains[b.feature] += b.gain.max(0.0);
            child_of[slot] = Some(left);
        }
        let mut child_stats = vec![(0.0, 0.0, 0usize); nodes.len()];
        for (r, row) in state.iter_mut().enumerate() {
            let nd = row.node;
            if nd == NONE {
                continue;
            }
            let slot = nd as usize - base;
            match child_of[slot] {
                None => {
                    leaf_of[r] = Some(nd as usize);
                    row.node = NONE;
                    finished += 1;
                }
                Some(left) => {
                    let b = &best[slot];
                    let c = if x[[r, b.feature]] <= b.threshold { left } else { left + 1 };
                    row.node = c as u32;
                    child_stats[c].0 += row.w;
                    child_stats[c].1 += row.wt;
                    child_stats[c].2 += 1;
                }
            }
        }
        if finished * 8 >= active {
            for col in columns.iter_mut() {
                col.retain(|r| state[r as usize].node != NONE);
            }
            active -= finished;
            finished = 0;
        }
        let mut next = Vec::new();
        for (slot, c) in child_of.iter().enumerate() {
            if let Some(left) = *c {
                for id in [left, left + 1] {
                    let (w, s, count) = child_stats[id];
                    nodes[id].weight = w;
                    nodes[id].value = if w > 0.0 { s / w } else { 0.0 };
                    next.push(Open {
                        id,
                        w,
                        s,
                        count,
                        depth: level[slot].depth + 1,
                    });
                }
            }
        }
        level = next;
    }
    Grown {
        tree: Tree { nodes },
        leaf_of,
        gains,
    }
}

pub(crate) fn normalize(gains: &mut [f64]) {
    let total: f64 = gains.iter().sum();
    if total > 0.0 {
        for g in gains.iter_mut() {
            *g /= total;
        }
    }
}

/// Fits a single Gini classification tree.
pub(crate) fn fit_tree(x: &Array2<f64>, y: &[bool], params: &TreeParams) -> (Tree, Vec<f64>) {
    use rand::SeedableRng;
    let sorted = Presorted::new(x);
    let target: Vec<f64> = y.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let weight = vec![1.0; y.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut grown = grow(x, &sorted, &target, &weight, params, Criterion::Gini, &mut rng);
    normalize(&mut grown.gains);
    (grown.tree, grown.gains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn params(depth: usize, min_leaf: usize) -> TreeParams {
        TreeParams {
            max_depth: depth,
            min_leaf,
            ..Default::default()
        }
    }

    #[test]
    fn xor_needs_depth_two() {
        let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let y = [false, true, true, false];
        let (tree, imp) = fit_tree(&x, &y, &params(2, 1));
        for (i, row) in x.rows().into_iter().enumerate() {
            let p = tree.predict(row.as_slice().unwrap());
            assert_eq!(p >= 0.5, y[i]);
        }
        assert_eq!(tree.depth(), 2);
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_leaf_fraction() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let (tree, imp) = fit_tree(&x, &[true, true, true, false], &params(12, 5));
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.predict(&[0.0]), 0.75);
        assert_eq!(imp, vec![0.0]);
    }

    #[test]
    fn threshold_is_midpoint_and_unused_feature_scores_zero() {
        let x = array![[1.0, 5.0], [2.0, 5.0], [4.0, 5.0], [6.0, 5.0]];
        let (tree, imp) = fit_tree(&x, &[false, false, true, true], &params(3, 1));
        assert_eq!(tree.nodes[0].feature, Some(0));
        assert_eq!(tree.nodes[0].threshold, 3.0);
        assert_eq!(imp, vec![1.0, 0.0]);
    }

    #[test]
    fn tie_prefers_lowest_feature() {
        let x = array![[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]];
        let (tree, _) = fit_tree(&x, &[false, false, true, true], &params(3, 1));
        assert_eq!(tree.nodes[0].feature, Some(0));
    }

    #[test]
    fn respects_depth_and_leaf_size() {
        let n = 200;
        let x = Array2::from_shape_fn((n, 3), |(i, j)| ((i * (j + 3)) % 17) as f64);
        let y: Vec<bool> = (0..n).map(|i| (i * 7) % 5 < 2).collect();
        let (tree, _) = fit_tree(&x, &y, &params(4, 7));
        assert!(tree.depth() <= 4);
        for node in tree.nodes.iter().filter(|n| n.feature.is_none()) {
            assert!(node.weight >= 7.0);
        }
    }

    #[test]
    fn regression_split_on_residual() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let sorted = Presorted::new(&x);
        let target = [-1.0, -1.0, 2.0, 2.0];
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let g = grow(&x, &sorted, &target, &[1.0; 4], &params(1, 1), Criterion::Squared, &mut rng);
        assert_eq!(g.tree.nodes[0].threshold, 1.5);
        assert_eq!(g.leaf_of, vec![Some(1), Some(1), Some(2), Some(2)]);
        assert_eq!(g.tree.nodes[2].value, 2.0);
    }
}
