// SPDX-License-Identifier: MIT OR Apache-2.0

//! Relation data files, LRE artifacts and metrics tables.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::fit::{Lre, RelationExample};
use super::metrics::{LreMetrics, SOFT_CAUSALITY_CONVENTION};
use super::model::{ProbePoint, ReferenceSpec};
use crate::corpus::TermId;
use crate::error::{Error, Result};

/// One relation: its examples and, optionally, the reference model that
/// produced their subject vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationData {
    pub relation: String,
    #[serde(default)]
    pub model: Option<ReferenceSpec>,
    /// Indices into `examples` used for fitting; the first eight when absent.
    #[serde(default)]
    pub fit_examples: Option<Vec<usize>>,
    pub examples: Vec<RelationExample>,
}

impl RelationData {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("relation data serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn fit_set(&self, default_n: usize) -> Result<Vec<RelationExample>> {
        match &self.fit_examples {
            Some(idx) => idx
                .iter()
                .map(|&i| {
                    self.examples.get(i).cloned().ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "relation {}: fit example index {i} out of range",
                            self.relation
                        ))
                    })
                })
                .collect(),
            None => Ok(self.examples.iter().take(default_n).cloned().collect()),
        }
    }
}

const LRE_MAGIC: &str = "FREQLENS-LRE 1";

#[derive(Debug, Serialize, Deserialize)]
struct LreHeader {
    relation: String,
    rows: usize,
    cols: usize,
    beta: f64,
    rank: usize,
    probe_point: ProbePoint,
    fit_example_ids: Vec<TermId>,
}

/// Text header line, JSON header line, then `W` (row-major) and `b` as
/// little-endian f64.
pub fn save_lre(path: &Path, relation: &str, lre: &Lre) -> Result<()> {
    let header = LreHeader {
        relation: relation.to_string(),
        rows: lre.w.nrows(),
        cols: lre.w.ncols(),
        beta: lre.beta,
        rank: lre.rank,
        probe_point: lre.probe_point,
        fit_example_ids: lre.fit_example_ids.clone(),
    };
    let mut out = Vec::new();
    writeln!(out, "{LRE_MAGIC}").unwrap();
    serde_json::to_writer(&mut out, &header).unwrap();
    out.push(b'\n');
    for i in 0..lre.w.nrows() {
        for j in 0..lre.w.ncols() {
            out.extend_from_slice(&lre.w[(i, j)].to_le_bytes());
        }
    }
    for v in lre.b.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_lre(path: &Path) -> Result<(String, Lre)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let loc = || path.display().to_string();
    let mut lines = bytes.splitn(3, |&b| b == b'\n');
    let magic = lines.next().unwrap_or_default();
    if magic != LRE_MAGIC.as_bytes() {
        return Err(Error::parse(loc(), "not an LRE artifact"));
    }
    let header: LreHeader = serde_json::from_slice(lines.next().unwrap_or_default())
        .map_err(|e| Error::parse(loc(), e))?;
    let blob = lines.next().unwrap_or_default();
    let expected = (header.rows * header.cols + header.rows) * 8;
    if blob.len() != expected {
        return Err(Error::parse(
            loc(),
            format!("matrix blob has {} bytes, header implies {expected}", blob.len()),
        ));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (wv, bv) = values.split_at(header.rows * header.cols);
    let lre = Lre {
        w: DMatrix::from_row_slice(header.rows, header.cols, wv),
        b: DVector::from_column_slice(bv),
        beta: header.beta,
        rank: header.rank,
        fit_example_ids: header.fit_example_ids,
        probe_point: header.probe_point,
    };
    Ok((header.relation, lre))
}

/// One row of the per-relation metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMetricsRow {
    pub relation: String,
    pub metrics: LreMetrics,
    pub beta: f64,
    pub rank: usize,
    pub probe_point: ProbePoint,
}

const METRICS_HEADER: &str =
    "relation\tfaithfulness\tfaith_prob\tsoft_causality\thard_causality\tn_eval\tbeta\trank\tprobe_point";

pub fn write_metrics(path: &Path, rows: &[RelationMetricsRow]) -> Result<()> {
    let mut out = format!("# {SOFT_CAUSALITY_CONVENTION}\n{METRICS_HEADER}\n");
    for r in rows {
        let m = &r.metrics;
        out.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}\n",
            r.relation, m.faithfulness, m.faith_prob, m.soft_causality, m.hard_causality, m.n_eval, r.beta, r.rank, r.probe_point
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<RelationMetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.starts_with("relation\t") || line.trim().is_empty() {
            continue;
        }
        let loc = || format!("{}:{}", path.display(), lineno + 1);
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 9 {
            return Err(Error::parse(loc(), format!("expected 9 columns, found {}", f.len())));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|e| Error::parse(loc(), e));
        let int = |i: usize| f[i].parse::<usize>().map_err(|e| Error::parse(loc(), e));
        rows.push(RelationMetricsRow {
            relation: f[0].to_string(),
            metrics: LreMetrics {
                faithfulness: num(1)?,
                faith_prob: num(2)?,
                soft_causality: num(3)?,
                hard_causality: num(4)?,
                n_eval: int(5)?,
            },
            beta: num(6)?,
            rank: int(7)?,
            probe_point: int(8)?,
        });
    }
    Ok(rows)
}
