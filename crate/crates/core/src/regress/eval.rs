// SPDX-License-Identifier: MIT OR Apache-2.0

//! Accuracy metrics, baselines, leave-one-relation-out cross-validation and
//! cross-model transfer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{Dataset, FeatureRow, FeatureSet};
use super::forest::{ln_to_count, train_forest, Forest, ForestParams};
use super::stats::{mean, std_dev};
use crate::error::{Error, Result};

/// `|log10(pred) − log10(true)| ≤ 1` with the prediction clamped to at least one.
pub fn within_magnitude(pred_count: f64, true_count: f64) -> bool {
    (pred_count.max(1.0).log10() - true_count.log10()).abs() <= 1.0
}

pub fn within_magnitude_accuracy(pred_counts: &[f64], true_counts: &[f64]) -> f64 {
    if pred_counts.is_empty() {
        return 0.0;
    }
    let hits = pred_counts
        .iter()
        .zip(true_counts)
        .filter(|(p, t)| within_magnitude(**p, **t))
        .count();
    hits as f64 / pred_counts.len() as f64
}

pub fn mae_ln(pred_ln: &[f64], true_ln: &[f64]) -> f64 {
    if pred_ln.is_empty() {
        return 0.0;
    }
    pred_ln.iter().zip(true_ln).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred_ln.len() as f64
}

fn accuracy_ln(pred_ln: &[f64], true_counts: &[f64]) -> f64 {
    let pred: Vec<f64> = pred_ln.iter().map(|&p| ln_to_count(p)).collect();
    within_magnitude_accuracy(&pred, true_counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub mean: f64,
    pub random: f64,
}

/// Mean baseline predicts the mean training ln-count everywhere; the random
/// baseline draws one training ln-count per eval row, with replacement.
pub fn baselines(train_ln: &[f64], eval_true_counts: &[f64], seed: u64) -> Result<Baselines> {
    if train_ln.is_empty() {
        return Err(Error::InvalidArgument("baselines need a nonempty training set".into()));
    }
    let m = mean(train_ln);
    let mean_pred = vec![m; eval_true_counts.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_pred: Vec<f64> = eval_true_counts
        .iter()
        .map(|_| train_ln[rng.random_range(0..train_ln.len())])
        .collect();
    Ok(Baselines {
        mean: accuracy_ln(&mean_pred, eval_true_counts),
        random: accuracy_ln(&random_pred, eval_true_counts),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationBreakdown {
    pub relation_id: String,
    pub n: usize,
    pub within_magnitude_accuracy: f64,
    pub mae_ln: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub within_magnitude_accuracy: f64,
    pub mae_ln: f64,
    pub per_relation: Vec<RelationBreakdown>,
    pub baselines: Baselines,
}

/// Evaluates `forest` on `rows` whose ground-truth counts are `true_counts`.
fn score(
    forest: &Forest,
    rows: &[FeatureRow],
    true_counts: &[f64],
    train_ln: &[f64],
    seed: u64,
) -> Result<EvalReport> {
    let data = Dataset::from_rows(rows, &forest.feature_names)?;
    let pred = forest.predict_many(&data.x)?;
    let true_ln: Vec<f64> = true_counts.iter().map(|c| c.ln_1p()).collect();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        groups.entry(&r.relation_id).or_default().push(i);
    }
    let per_relation = groups
        .into_iter()
        .map(|(rel, idx)| {
            let p: Vec<f64> = idx.iter().map(|&i| pred[i]).collect();
            let t: Vec<f64> = idx.iter().map(|&i| true_counts[i]).collect();
            let tl: Vec<f64> = idx.iter().map(|&i| true_ln[i]).collect();
            RelationBreakdown {
                relation_id: rel.to_string(),
                n: idx.len(),
                within_magnitude_accuracy: accuracy_ln(&p, &t),
                mae_ln: mae_ln(&p, &tl),
            }
        })
        .collect();
    Ok(EvalReport {
        n: rows.len(),
        within_magnitude_accuracy: accuracy_ln(&pred, true_counts),
        mae_ln: mae_ln(&pred, &true_ln),
        per_relation,
        baselines: baselines(train_ln, true_counts, seed)?,
    })
}

/// Plain held-out evaluation; `train_ln` feeds the baselines.
pub fn evaluate(forest: &Forest, rows: &[FeatureRow], train_ln: &[f64], seed: u64) -> Result<EvalReport> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    let counts: Vec<f64> = rows.iter().map(FeatureRow::true_count).collect();
    score(forest, rows, &counts, train_ln, seed)
}

/// How transfer rescaling is applied; written into every transfer report.
pub const TRANSFER_SCALING: &str = "ground-truth counts multiplied by token_ratio; features unchanged";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub source_model: String,
    pub target_model: String,
    pub token_ratio: f64,
    pub scaling: String,
    pub report: EvalReport,
}

/// Evaluates a forest trained on one model's features against another
/// model's rows, rescaling their ground-truth counts by `token_ratio`.
pub fn cross_model_transfer(
    forest: &Forest,
    rows: &[FeatureRow],
    train_ln: &[f64],
    token_ratio: f64,
    source_model: &str,
    target_model: &str,
    seed: u64,
) -> Result<TransferReport> {
    if !(token_ratio > 0.0 && token_ratio.is_finite()) {
        return Err(Error::InvalidArgument(format!("token_ratio must be positive, got {token_ratio}")));
    }
    if rows.is_empty() {
        return Err(Error::InvalidArgument("transfer evaluation set is empty".into()));
    }
    let counts: Vec<f64> = rows.iter().map(|r| r.true_count() * token_ratio).collect();
    Ok(TransferReport {
        source_model: source_model.to_string(),
        target_model: target_model.to_string(),
        token_ratio,
        scaling: TRANSFER_SCALING.to_string(),
        report: score(forest, rows, &counts, train_ln, seed)?,
    })
}

/// Training and evaluation row indices when `held_out` is the evaluation
/// relation. Training drops the relation itself and every row whose object
/// appears among the held-out relation's objects.
pub fn fold_partition(rows: &[FeatureRow], held_out: &str) -> (Vec<usize>, Vec<usize>) {
    let objects: BTreeSet<_> = rows.iter().filter(|r| r.relation_id == held_out).map(|r| r.object_id).collect();
    let eval = (0..rows.len()).filter(|&i| rows[i].relation_id == held_out).collect();
    let train = (0..rows.len())
        .filter(|&i| rows[i].relation_id != held_out && !objects.contains(&rows[i].object_id))
        .collect();
    (train, eval)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub seed: u64,
    pub held_out: String,
    pub n_train: usize,
    pub report: EvalReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(v: &[f64]) -> Self {
        MeanStd {
            mean: mean(v),
            std: std_dev(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoroReport {
    pub feature_set: String,
    pub feature_names: Vec<String>,
    pub folds: Vec<FoldReport>,
    pub accuracy: MeanStd,
    pub mae_ln: MeanStd,
    pub mean_baseline: MeanStd,
    pub random_baseline: MeanStd,
}

/// Holds out each relation once per seed. Aggregates are over all folds;
/// the standard deviation is the population one.
pub fn loro_cv(rows: &[FeatureRow], features: FeatureSet, seeds: &[u64], params: &ForestParams) -> Result<LoroReport> {
    let relations: BTreeSet<&str> = rows.iter().map(|r| r.relation_id.as_str()).collect();
    if relations.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "leave-one-relation-out needs at least two relations, found {}",
            relations.len()
        )));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed is required".into()));
    }
    let mut rows = rows.to_vec();
    super::features::sort_rows(&mut rows);
    let names = features.names();
    let mut folds = Vec::new();
    for &seed in seeds {
        for rel in &relations {
            let (train_idx, eval_idx) = fold_partition(&rows, rel);
            if train_idx.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "holding out `{rel}` leaves no training rows after object exclusion"
                )));
            }
            let train: Vec<FeatureRow> = train_idx.iter().map(|&i| rows[i].clone()).collect();
            let eval: Vec<FeatureRow> = eval_idx.iter().map(|&i| rows[i].clone()).collect();
            let data = Dataset::from_rows(&train, &names)?;
            let forest = train_forest(&data.x, &data.y, &names, params, seed)?;
            folds.push(FoldReport {
                seed,
                held_out: rel.to_string(),
                n_train: train.len(),
                report: evaluate(&forest, &eval, &data.y, seed)?,
            });
        }
    }
    let col = |f: &dyn Fn(&FoldReport) -> f64| MeanStd::of(&folds.iter().map(f).collect::<Vec<_>>());
    Ok(LoroReport {
        feature_set: features.to_string(),
        feature_names: names.clone(),
        accuracy: col(&|f| f.report.within_magnitude_accuracy),
        mae_ln: col(&|f| f.report.mae_ln),
        mean_baseline: col(&|f| f.report.baselines.mean),
        random_baseline: col(&|f| f.report.baselines.random),
        folds,
    })
}

impl LoroReport {
    /// Tab-separated per-fold rows followed by an aggregate row.
    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "# feature_set={} features={} target=ln(1+count)\nseed\theld_out\tn_train\tn_eval\twithin_magnitude_accuracy\tmae_ln\tmean_baseline\trandom_baseline\n",
            self.feature_set,
            self.feature_names.join(",")
        );
        for f in &self.folds {
            let r = &f.report;
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                f.seed, f.held_out, f.n_train, r.n, r.within_magnitude_accuracy, r.mae_ln, r.baselines.mean, r.baselines.random
            );
        }
        let _ = writeln!(
            out,
            "mean±std\tall\t-\t-\t{:.6}±{:.6}\t{:.6}±{:.6}\t{:.6}±{:.6}\t{:.6}±{:.6}",
            self.accuracy.mean,
            self.accuracy.std,
            self.mae_ln.mean,
            self.mae_ln.std,
            self.mean_baseline.mean,
            self.mean_baseline.std,
            self.random_baseline.mean,
            self.random_baseline.std
        );
        out
    }
}

impl TransferReport {
    pub fn to_tsv(&self) -> String {
        let r = &self.report;
        let mut out = format!(
            "# source_model={} target_model={} token_ratio={} scaling: {}\nn_eval\twithin_magnitude_accuracy\tmae_ln\tmean_baseline\trandom_baseline\n",
            self.source_model, self.target_model, self.token_ratio, self.scaling
        );
        let _ = writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            r.n, r.within_magnitude_accuracy, r.mae_ln, r.baselines.mean, r.baselines.random
        );
        out
    }
}
