// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-example feature rows joining LM-likelihood features, LRE quality
//! features and corpus counts.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{CountTable, TermId};
use crate::error::{Error, Result};

pub const LM_FEATURES: [&str; 2] = ["logprob_correct", "fewshot_accuracy"];
pub const LRE_FEATURES: [&str; 4] = ["faithfulness", "faith_prob", "soft_causality", "hard_causality"];
pub const ALL_FEATURES: [&str; 6] = [
    "logprob_correct",
    "fewshot_accuracy",
    "faithfulness",
    "faith_prob",
    "soft_causality",
    "hard_causality",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Object,
    #[default]
    SubjectObject,
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetKind::Object => "object",
            TargetKind::SubjectObject => "subject_object",
        })
    }
}

impl FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "object" => Ok(TargetKind::Object),
            "subject_object" => Ok(TargetKind::SubjectObject),
            other => Err(Error::InvalidArgument(format!(
                "unknown target kind `{other}` (expected object or subject_object)"
            ))),
        }
    }
}

/// Which feature columns a model is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    LmOnly,
    LmAndLre,
}

impl FeatureSet {
    pub fn names(self) -> Vec<String> {
        match self {
            FeatureSet::LmOnly => LM_FEATURES.iter().map(|s| s.to_string()).collect(),
            FeatureSet::LmAndLre => ALL_FEATURES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSet::LmOnly => "lm_only",
            FeatureSet::LmAndLre => "lm_and_lre",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LmFeatures {
    pub logprob_correct: f64,
    /// Fraction of five prompt trials answered correctly.
    pub fewshot_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LreFeatures {
    pub faithfulness: f64,
    pub faith_prob: f64,
    pub soft_causality: f64,
    pub hard_causality: f64,
}

/// Measurements for one relation example before the count join.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub relation_id: String,
    pub example_id: String,
    pub subject_id: TermId,
    pub object_id: TermId,
    pub lm: LmFeatures,
    pub lre: LreFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub relation_id: String,
    pub example_id: String,
    pub subject_id: TermId,
    pub object_id: TermId,
    pub lm: LmFeatures,
    pub lre: LreFeatures,
    /// `ln(1 + count)`.
    pub target_ln_count: f64,
    pub target_kind: TargetKind,
}

impl FeatureRow {
    pub fn feature(&self, name: &str) -> Option<f64> {
        Some(match name {
            "logprob_correct" => self.lm.logprob_correct,
            "fewshot_accuracy" => self.lm.fewshot_accuracy,
            "faithfulness" => self.lre.faithfulness,
            "faith_prob" => self.lre.faith_prob,
            "soft_causality" => self.lre.soft_causality,
            "hard_causality" => self.lre.hard_causality,
            _ => return None,
        })
    }

    pub fn features(&self, names: &[String]) -> Result<Vec<f64>> {
        names
            .iter()
            .map(|n| {
                self.feature(n)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown feature `{n}`")))
            })
            .collect()
    }

    pub fn true_count(&self) -> f64 {
        self.target_ln_count.exp() - 1.0
    }
}

/// Feature matrix in row order with its targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn from_rows(rows: &[FeatureRow], names: &[String]) -> Result<Self> {
        Ok(Dataset {
            feature_names: names.to_vec(),
            x: rows.iter().map(|r| r.features(names)).collect::<Result<_>>()?,
            y: rows.iter().map(|r| r.target_ln_count).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Sorts rows by `(relation_id, example_id)` so training never depends on
/// input order.
pub fn sort_rows(rows: &mut [FeatureRow]) {
    rows.sort_by(|a, b| (&a.relation_id, &a.example_id).cmp(&(&b.relation_id, &b.example_id)));
}

/// Joins example measurements with counts, keeping only examples whose count
/// exceeds one. `n_terms` bounds valid term ids. Relation identity is carried
/// for bookkeeping but is never a feature.
pub fn build_feature_table(
    records: &[ExampleRecord],
    counts: &CountTable,
    n_terms: usize,
    target_kind: TargetKind,
) -> Result<Vec<FeatureRow>> {
    let unresolved: BTreeSet<String> = records
        .iter()
        .flat_map(|r| {
            let mut bad = Vec::new();
            if r.object_id as usize >= n_terms {
                bad.push(format!("{}:{} object {}", r.relation_id, r.example_id, r.object_id));
            }
            if target_kind == TargetKind::SubjectObject && r.subject_id as usize >= n_terms {
                bad.push(format!("{}:{} subject {}", r.relation_id, r.example_id, r.subject_id));
            }
            bad
        })
        .collect();
    if !unresolved.is_empty() {
        return Err(Error::UnresolvedTerms(unresolved.into_iter().collect()));
    }

    let mut rows: Vec<FeatureRow> = records
        .iter()
        .filter_map(|r| {
            let count = match target_kind {
                TargetKind::Object => counts.occurrence(r.object_id),
                TargetKind::SubjectObject => counts.pair(r.subject_id, r.object_id),
            };
            (count > 1).then(|| FeatureRow {
                relation_id: r.relation_id.clone(),
                example_id: r.example_id.clone(),
                subject_id: r.subject_id,
                object_id: r.object_id,
                lm: r.lm,
                lre: r.lre,
                target_ln_count: (count as f64).ln_1p(),
                target_kind,
            })
        })
        .collect();
    sort_rows(&mut rows);
    Ok(rows)
}

const RECORD_HEADER: &str = "relation_id\texample_id\tsubject_id\tobject_id\tlogprob_correct\tfewshot_accuracy\tfaithfulness\tfaith_prob\tsoft_causality\thard_causality";

fn feature_fields(lm: &LmFeatures, lre: &LreFeatures) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}",
        lm.logprob_correct, lm.fewshot_accuracy, lre.faithfulness, lre.faith_prob, lre.soft_causality, lre.hard_causality
    )
}

fn split_line<'a>(line: &'a str, n: usize, loc: &dyn Fn() -> String) -> Result<Vec<&'a str>> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != n {
        return Err(Error::parse(loc(), format!("expected {n} columns, found {}", f.len())));
    }
    Ok(f)
}

fn parse_features(f: &[&str], loc: &dyn Fn() -> String) -> Result<(LmFeatures, LreFeatures)> {
    let num = |i: usize| f[i].parse::<f64>().map_err(|e| Error::parse(loc(), e));
    Ok((
        LmFeatures {
            logprob_correct: num(0)?,
            fewshot_accuracy: num(1)?,
        },
        LreFeatures {
            faithfulness: num(2)?,
            faith_prob: num(3)?,
            soft_causality: num(4)?,
            hard_causality: num(5)?,
        },
    ))
}

fn data_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

pub fn write_records(path: &Path, records: &[ExampleRecord]) -> Result<()> {
    let mut out = format!("{RECORD_HEADER}\n");
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.relation_id,
            r.example_id,
            r.subject_id,
            r.object_id,
            feature_fields(&r.lm, &r.lre)
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<ExampleRecord>> {
    data_lines(path)?
        .into_iter()
        .map(|(lineno, line)| {
            let loc = || format!("{}:{lineno}", path.display());
            let f = split_line(&line, 10, &loc)?;
            let id = |i: usize| f[i].parse::<TermId>().map_err(|e| Error::parse(loc(), e));
            let (lm, lre) = parse_features(&f[4..], &loc)?;
            Ok(ExampleRecord {
                relation_id: f[0].to_string(),
                example_id: f[1].to_string(),
                subject_id: id(2)?,
                object_id: id(3)?,
                lm,
                lre,
            })
        })
        .collect()
}

pub fn write_feature_table(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let mut out = format!("{RECORD_HEADER}\ttarget_ln_count\ttarget_kind\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.relation_id,
            r.example_id,
            r.subject_id,
            r.object_id,
            feature_fields(&r.lm, &r.lre),
            r.target_ln_count,
            r.target_kind
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_feature_table(path: &Path) -> Result<Vec<FeatureRow>> {
    data_lines(path)?
        .into_iter()
        .map(|(lineno, line)| {
            let loc = || format!("{}:{lineno}", path.display());
            let f = split_line(&line, 12, &loc)?;
            let id = |i: usize| f[i].parse::<TermId>().map_err(|e| Error::parse(loc(), e));
            let (lm, lre) = parse_features(&f[4..10], &loc)?;
            Ok(FeatureRow {
                relation_id: f[0].to_string(),
                example_id: f[1].to_string(),
                subject_id: id(2)?,
                object_id: id(3)?,
                lm,
                lre,
                target_ln_count: f[10].parse().map_err(|e| Error::parse(loc(), e))?,
                target_kind: f[11].parse()?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(rel: &str, ex: &str, s: u32, o: u32, hard: f64) -> ExampleRecord {
        ExampleRecord {
            relation_id: rel.into(),
            example_id: ex.into(),
            subject_id: s,
            object_id: o,
            lm: LmFeatures {
                logprob_correct: -0.5,
                fewshot_accuracy: 0.8,
            },
            lre: LreFeatures {
                faithfulness: 1.0,
                faith_prob: -0.25,
                soft_causality: 0.5,
                hard_causality: hard,
            },
        }
    }

    #[test]
    fn count_filter_boundary() {
        let mut counts = CountTable::new();
        counts.add_pair(0, 10, 1);
        counts.add_pair(1, 10, 2);
        let rows = build_feature_table(
            &[record("r", "a", 0, 10, 0.1), record("r", "b", 1, 10, 0.2), record("r", "c", 2, 10, 0.3)],
            &counts,
            20,
            TargetKind::SubjectObject,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].example_id, "b");
        assert!((rows[0].target_ln_count - 3f64.ln()).abs() < 1e-15);
        assert!(rows[0].target_ln_count >= 2f64.ln());
    }

    #[test]
    fn three_relation_join_matches_hand_filter() {
        let mut counts = CountTable::new();
        for (o, n) in [(10, 5), (11, 1), (12, 0), (13, 40), (14, 2)] {
            counts.add_occurrences(o, n);
        }
        let records = vec![
            record("r2", "x", 0, 13, 0.0),
            record("r1", "b", 1, 11, 0.0),
            record("r1", "a", 2, 10, 0.0),
            record("r3", "y", 3, 12, 0.0),
            record("r3", "z", 4, 14, 0.0),
        ];
        let rows = build_feature_table(&records, &counts, 20, TargetKind::Object).unwrap();
        let keys: Vec<(&str, &str)> = rows.iter().map(|r| (r.relation_id.as_str(), r.example_id.as_str())).collect();
        assert_eq!(keys, vec![("r1", "a"), ("r2", "x"), ("r3", "z")]);
    }

    #[test]
    fn unresolved_ids_listed() {
        let err = build_feature_table(&[record("r", "a", 30, 10, 0.0), record("r", "b", 1, 40, 0.0)], &CountTable::new(), 20, TargetKind::SubjectObject)
            .unwrap_err();
        match err {
            Error::UnresolvedTerms(ids) => assert_eq!(ids.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tables_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![record("r", "a", 0, 1, 0.375), record("q", "b", 2, 3, 1.0 / 3.0)];
        let path = dir.path().join("records.tsv");
        write_records(&path, &records).unwrap();
        assert_eq!(read_records(&path).unwrap(), records);

        let mut counts = CountTable::new();
        counts.add_pair(0, 1, 7);
        counts.add_pair(2, 3, 9);
        let rows = build_feature_table(&records, &counts, 4, TargetKind::SubjectObject).unwrap();
        let path = dir.path().join("features.tsv");
        write_feature_table(&path, &rows).unwrap();
        assert_eq!(read_feature_table(&path).unwrap(), rows);
        let header = fs::read_to_string(&path).unwrap();
        for name in ALL_FEATURES {
            assert!(header.lines().next().unwrap().contains(name));
        }
    }
}
