// SPDX-License-Identifier: MIT OR Apache-2.0

//! Permutation importance and PCA merging of correlated features.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::{fold_partition, within_magnitude_accuracy};
use super::features::{sort_rows, Dataset, FeatureRow, FeatureSet};
use super::forest::{ln_to_count, splitmix64, train_forest, Forest, ForestParams};
use super::stats::{mean, std_dev};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    /// Mean drop in within-magnitude accuracy over the shuffles.
    pub drop: f64,
    pub std: f64,
}

fn accuracy(forest: &Forest, x: &[Vec<f64>], true_counts: &[f64]) -> Result<f64> {
    let pred: Vec<f64> = forest.predict_many(x)?.into_iter().map(ln_to_count).collect();
    Ok(within_magnitude_accuracy(&pred, true_counts))
}

/// Shuffles one column at a time `n_repeats` times. Each (feature, repeat)
/// shuffle has its own derived seed.
pub fn permutation_importance(
    forest: &Forest,
    x: &[Vec<f64>],
    true_counts: &[f64],
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<FeatureImportance>> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("importance needs evaluation rows".into()));
    }
    if n_repeats == 0 {
        return Err(Error::InvalidArgument("n_repeats must be positive".into()));
    }
    let base = accuracy(forest, x, true_counts)?;
    let mut state = seed;
    let mut out = Vec::with_capacity(forest.feature_names.len());
    for (f, name) in forest.feature_names.iter().enumerate() {
        let mut drops = Vec::with_capacity(n_repeats);
        for _ in 0..n_repeats {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(&mut state));
            let mut column: Vec<f64> = x.iter().map(|r| r[f]).collect();
            column.shuffle(&mut rng);
            let shuffled: Vec<Vec<f64>> = x
                .iter()
                .zip(&column)
                .map(|(r, &v)| {
                    let mut r = r.clone();
                    r[f] = v;
                    r
                })
                .collect();
            drops.push(base - accuracy(forest, &shuffled, true_counts)?);
        }
        out.push(FeatureImportance {
            feature: name.clone(),
            drop: mean(&drops),
            std: std_dev(&drops),
        });
    }
    Ok(out)
}

/// Sorted by decreasing drop; ties keep feature order.
pub fn rank_importance(mut imp: Vec<FeatureImportance>) -> Vec<FeatureImportance> {
    imp.sort_by(|a, b| b.drop.total_cmp(&a.drop));
    imp
}

/// First principal component of a standardized column subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaMerge {
    pub columns: Vec<usize>,
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Unit loading vector, sign fixed so its largest-magnitude entry is positive.
    pub loading: Vec<f64>,
    pub explained_variance_ratio: f64,
    pub merged_name: String,
}

impl PcaMerge {
    pub fn fit(x: &[Vec<f64>], feature_names: &[String], subset: &[&str]) -> Result<PcaMerge> {
        if subset.len() < 2 {
            return Err(Error::InvalidArgument("PCA merge needs at least two features".into()));
        }
        if x.len() < 2 {
            return Err(Error::InvalidArgument("PCA merge needs at least two rows".into()));
        }
        let columns: Vec<usize> = subset
            .iter()
            .map(|s| {
                feature_names
                    .iter()
                    .position(|n| n == s)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown feature `{s}` in PCA subset")))
            })
            .collect::<Result<_>>()?;
        let k = columns.len();
        let cols: Vec<Vec<f64>> = columns.iter().map(|&c| x.iter().map(|r| r[c]).collect()).collect();
        let means: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
        let stds: Vec<f64> = cols.iter().map(|c| std_dev(c)).collect();
        if let Some(i) = stds.iter().position(|&s| s == 0.0) {
            return Err(Error::ZeroVariance(format!("feature `{}` is constant", subset[i])));
        }
        let n = x.len();
        let z = DMatrix::from_fn(n, k, |i, j| (cols[j][i] - means[j]) / stds[j]);
        let cov = z.transpose() * &z / n as f64;
        let eig = SymmetricEigen::new(cov);
        let top = (0..k).max_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(b.cmp(&a))).unwrap();
        let total: f64 = eig.eigenvalues.iter().sum();
        let mut loading: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
        let pivot = (0..k).max_by(|&a, &b| loading[a].abs().total_cmp(&loading[b].abs()).then(b.cmp(&a))).unwrap();
        if loading[pivot] < 0.0 {
            loading.iter_mut().for_each(|v| *v = -*v);
        }
        Ok(PcaMerge {
            columns,
            names: subset.iter().map(|s| s.to_string()).collect(),
            means,
            stds,
            loading,
            explained_variance_ratio: eig.eigenvalues[top] / total,
            merged_name: format!("pc({})", subset.join("+")),
        })
    }

    /// Replaces the subset columns with the component score, placed where
    /// the first subset column was.
    pub fn transform(&self, x: &[Vec<f64>], feature_names: &[String]) -> (Vec<Vec<f64>>, Vec<String>) {
        let anchor = *self.columns.iter().min().unwrap();
        let keep = |i: usize| !self.columns.contains(&i);
        let mut names = Vec::new();
        for (i, n) in feature_names.iter().enumerate() {
            if i == anchor {
                names.push(self.merged_name.clone());
            } else if keep(i) {
                names.push(n.clone());
            }
        }
        let rows = x
            .iter()
            .map(|r| {
                let score: f64 = self
                    .columns
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| self.loading[j] * (r[c] - self.means[j]) / self.stds[j])
                    .sum();
                let mut out = Vec::with_capacity(names.len());
                for (i, &v) in r.iter().enumerate() {
                    if i == anchor {
                        out.push(score);
                    } else if keep(i) {
                        out.push(v);
                    }
                }
                out
            })
            .collect();
        (rows, names)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    /// Ranked by decreasing mean drop; `std` is across seeds and repeats.
    pub features: Vec<FeatureImportance>,
    pub merged: Option<String>,
    /// Explained-variance ratio of the merge fitted on all rows.
    pub explained_variance_ratio: Option<f64>,
    pub n_folds: usize,
}

/// Permutation importance on held-out predictions. For each seed, every
/// relation is held out in turn and scored by a forest trained without it
/// (the optional PCA merge is fitted on that fold's training rows). The
/// held-out rows of all folds are pooled; a column is shuffled across the
/// pool and each row is re-scored by its own fold's forest. Drops are
/// averaged over seeds and repeats.
pub fn loro_importance(
    rows: &[FeatureRow],
    seeds: &[u64],
    params: &ForestParams,
    pca_subset: &[&str],
    n_repeats: usize,
) -> Result<ImportanceReport> {
    let mut rows = rows.to_vec();
    sort_rows(&mut rows);
    let relations: std::collections::BTreeSet<String> = rows.iter().map(|r| r.relation_id.clone()).collect();
    if relations.len() < 2 {
        return Err(Error::InvalidArgument("importance needs at least two relations".into()));
    }
    if seeds.is_empty() || n_repeats == 0 {
        return Err(Error::InvalidArgument("importance needs seeds and a positive repeat count".into()));
    }
    let names = FeatureSet::LmAndLre.names();
    let all = Dataset::from_rows(&rows, &names)?;
    let (merged, ratio) = if pca_subset.is_empty() {
        (None, None)
    } else {
        let p = PcaMerge::fit(&all.x, &names, pca_subset)?;
        (Some(p.merged_name.clone()), Some(p.explained_variance_ratio))
    };

    let mut drops: Vec<Vec<f64>> = Vec::new();
    let mut out_names = names.clone();
    let mut n_folds = 0;
    for &seed in seeds {
        let mut forests = Vec::new();
        let mut pool_x: Vec<Vec<f64>> = Vec::new();
        let mut pool_fold: Vec<usize> = Vec::new();
        let mut pool_counts: Vec<f64> = Vec::new();
        for rel in &relations {
            let (train_idx, eval_idx) = fold_partition(&rows, rel);
            if train_idx.is_empty() {
                continue;
            }
            let pick = |idx: &[usize]| Dataset::from_rows(&idx.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>(), &names);
            let train = pick(&train_idx)?;
            let eval = pick(&eval_idx)?;
            let (tx, ex, fnames) = if pca_subset.is_empty() {
                (train.x, eval.x, names.clone())
            } else {
                let p = PcaMerge::fit(&train.x, &names, pca_subset)?;
                let (tx, fnames) = p.transform(&train.x, &names);
                (tx, p.transform(&eval.x, &names).0, fnames)
            };
            forests.push(train_forest(&tx, &train.y, &fnames, params, seed)?);
            pool_fold.extend(std::iter::repeat_n(forests.len() - 1, ex.len()));
            pool_counts.extend(eval.y.iter().map(|y| y.exp_m1()));
            pool_x.extend(ex);
            out_names = fnames;
        }
        n_folds += forests.len();
        let score = |x: &[Vec<f64>]| -> Result<f64> {
            let pred = x
                .iter()
                .zip(&pool_fold)
                .map(|(r, &f)| forests[f].predict(r).map(ln_to_count))
                .collect::<Result<Vec<f64>>>()?;
            Ok(within_magnitude_accuracy(&pred, &pool_counts))
        };
        let base = score(&pool_x)?;
        drops.resize(out_names.len(), Vec::new());
        let mut state = seed;
        for (f, slot) in drops.iter_mut().enumerate() {
            for _ in 0..n_repeats {
                let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(&mut state));
                let mut column: Vec<f64> = pool_x.iter().map(|r| r[f]).collect();
                column.shuffle(&mut rng);
                let shuffled: Vec<Vec<f64>> = pool_x
                    .iter()
                    .zip(&column)
                    .map(|(r, &v)| {
                        let mut r = r.clone();
                        r[f] = v;
                        r
                    })
                    .collect();
                slot.push(base - score(&shuffled)?);
            }
        }
    }
    let features = out_names
        .into_iter()
        .zip(drops)
        .map(|(feature, d)| FeatureImportance {
            feature,
            drop: mean(&d),
            std: std_dev(&d),
        })
        .collect();
    Ok(ImportanceReport {
        features: rank_importance(features),
        merged,
        explained_variance_ratio: ratio,
        n_folds,
    })
}

impl ImportanceReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        if let (Some(m), Some(r)) = (&self.merged, self.explained_variance_ratio) {
            out.push_str(&format!("# merged {m} explained_variance_ratio={r:.6}\n"));
        }
        out.push_str("rank\tfeature\tmean_accuracy_drop\tstd\tn_folds\n");
        for (i, f) in self.features.iter().enumerate() {
            out.push_str(&format!("{}\t{}\t{:.6}\t{:.6}\t{}\n", i + 1, f.feature, f.drop, f.std, self.n_folds));
        }
        out
    }
}
