// SPDX-License-Identifier: MIT OR Apache-2.0

//! CART regression trees with exhaustive best-split search.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default = "one")]
    pub min_samples_leaf: usize,
    #[serde(default = "two")]
    pub min_samples_split: usize,
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_leaf: 1,
            min_samples_split: 2,
        }
    }
}

/// Flat node arrays. `feature[i] < 0` marks a leaf; otherwise rows with
/// `x[feature] <= threshold` go to `left`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tree {
    pub feature: Vec<i32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub value: Vec<f64>,
}

struct Split {
    feature: usize,
    threshold: f64,
    /// `Σl²/nl + Σr²/nr`; larger means lower squared error.
    score: f64,
}

impl Tree {
    /// Fits on the multiset `rows` of indices into `x`/`y` (repeats allowed).
    pub fn fit(x: &[Vec<f64>], y: &[f64], rows: &[usize], params: &TreeParams) -> Tree {
        let mut tree = Tree::default();
        let mut rows = rows.to_vec();
        tree.grow(x, y, &mut rows, 0, params);
        tree
    }

    fn push_leaf(&mut self, value: f64) -> usize {
        self.feature.push(-1);
        self.threshold.push(0.0);
        self.left.push(0);
        self.right.push(0);
        self.value.push(value);
        self.feature.len() - 1
    }

    fn grow(&mut self, x: &[Vec<f64>], y: &[f64], rows: &mut [usize], depth: usize, params: &TreeParams) -> usize {
        let n = rows.len();
        let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n as f64;
        let node = self.push_leaf(mean);
        let pure = rows.iter().all(|&r| y[r] == y[rows[0]]);
        if pure || n < params.min_samples_split.max(2) || params.max_depth.is_some_and(|d| depth >= d) {
            return node;
        }
        let Some(split) = best_split(x, y, rows, params.min_samples_leaf.max(1)) else {
            return node;
        };
        let f = split.feature;
        let t = split.threshold;
        rows.sort_by(|&a, &b| (x[a][f] > t).cmp(&(x[b][f] > t)).then(a.cmp(&b)));
        let mid = rows.partition_point(|&r| x[r][f] <= t);
        let (l, r) = rows.split_at_mut(mid);
        let li = self.grow(x, y, l, depth + 1, params);
        let ri = self.grow(x, y, r, depth + 1, params);
        self.feature[node] = f as i32;
        self.threshold[node] = t;
        self.left[node] = li as u32;
        self.right[node] = ri as u32;
        node
    }

    pub fn predict(&self, features: &[f64]) -> f64 {
        let mut i = 0;
        while self.feature[i] >= 0 {
            let f = self.feature[i] as usize;
            i = if features[f] <= self.threshold[i] {
                self.left[i]
            } else {
                self.right[i]
            } as usize;
        }
        self.value[i]
    }

    pub fn node_count(&self) -> usize {
        self.feature.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.feature.iter().filter(|&&f| f < 0).count()
    }
}

/// Scans every feature in order and every boundary between distinct sorted
/// values. A candidate replaces the incumbent only when its score is better
/// by more than a relative [`SPLIT_TIE_EPS`], so ties (including ones that
/// differ only by summation rounding) go to the lower feature index and then
/// the lower threshold. A split must also beat the unsplit node by that margin.
/// Relative score margin below which two candidate splits count as tied.
pub const SPLIT_TIE_EPS: f64 = 1e-9;

fn best_split(x: &[Vec<f64>], y: &[f64], rows: &[usize], min_leaf: usize) -> Option<Split> {
    let n = rows.len();
    let n_features = x[rows[0]].len();
    let total: f64 = rows.iter().map(|&r| y[r]).sum();
    let margin = |s: f64| SPLIT_TIE_EPS * s.abs().max(1.0);
    let parent = total * total / n as f64;
    let mut best: Option<Split> = None;
    let mut order = rows.to_vec();
    for f in 0..n_features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut left_sum = 0.0;
        for i in 0..n - 1 {
            left_sum += y[order[i]];
            let (lo, hi) = (x[order[i]][f], x[order[i + 1]][f]);
            let nl = i + 1;
            let nr = n - nl;
            if lo >= hi || nl < min_leaf || nr < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64;
            let incumbent = best.as_ref().map_or(parent, |b| b.score);
            if score > incumbent + margin(incumbent) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Split {
                    feature: f,
                    threshold,
                    score,
                });
            }
        }
    }
    best
}
