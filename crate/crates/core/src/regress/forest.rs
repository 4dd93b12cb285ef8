// SPDX-License-Identifier: MIT OR Apache-2.0

//! Bootstrap random forest of CART trees and its on-disk artifact.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Tree, TreeParams};
use crate::error::{Error, Result};

pub const DEFAULT_TREES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    #[serde(default)]
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: DEFAULT_TREES,
            bootstrap: true,
            tree: TreeParams::default(),
        }
    }
}

/// splitmix64 step; used to expand one master seed into per-tree seeds.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn tree_seeds(master: u64, n: usize) -> Vec<u64> {
    let mut state = master;
    (0..n).map(|_| splitmix64(&mut state)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub seed: u64,
    pub params: ForestParams,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
}

/// Trains on rows in the given order. Trees are built in parallel but each
/// depends only on its own derived seed, so the result does not depend on
/// the thread count.
pub fn train_forest(
    x: &[Vec<f64>],
    y: &[f64],
    feature_names: &[String],
    params: &ForestParams,
    seed: u64,
) -> Result<Forest> {
    if feature_names.is_empty() {
        return Err(Error::InvalidArgument("forest needs at least one feature".into()));
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument("forest needs at least one training row".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} feature rows but {} targets", x.len(), y.len())));
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidArgument("n_trees must be positive".into()));
    }
    if let Some(row) = x.iter().position(|r| r.len() != feature_names.len()) {
        return Err(Error::Dimension(format!(
            "row {row} has {} features, expected {}",
            x[row].len(),
            feature_names.len()
        )));
    }
    if let Some(i) = x.iter().flatten().chain(y).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            coordinate: i,
            detail: "training data".into(),
        });
    }
    let n = x.len();
    let trees = tree_seeds(seed, params.n_trees)
        .into_par_iter()
        .map(|s| {
            let rows: Vec<usize> = if params.bootstrap {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            Tree::fit(x, y, &rows, &params.tree)
        })
        .collect();
    Ok(Forest {
        seed,
        params: *params,
        feature_names: feature_names.to_vec(),
        trees,
    })
}

/// Converts a `ln(1 + count)` prediction back to a count.
pub fn ln_to_count(ln: f64) -> f64 {
    ln.exp_m1().max(0.0)
}

impl Forest {
    /// Mean tree prediction in `ln(1 + count)` space.
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.feature_names.len() {
            return Err(Error::Dimension(format!(
                "got {} features, forest expects {} ({})",
                features.len(),
                self.feature_names.len(),
                self.feature_names.join(", ")
            )));
        }
        Ok(self.trees.iter().map(|t| t.predict(features)).sum::<f64>() / self.trees.len() as f64)
    }

    pub fn predict_many(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        x.iter().map(|r| self.predict(r)).collect()
    }

    pub fn predict_count(&self, features: &[f64]) -> Result<f64> {
        self.predict(features).map(ln_to_count)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = ForestHeader {
            seed: self.seed,
            params: self.params,
            feature_names: self.feature_names.clone(),
            node_counts: self.trees.iter().map(Tree::node_count).collect(),
        };
        let mut out = Vec::new();
        writeln!(out, "{FOREST_MAGIC}").unwrap();
        serde_json::to_writer(&mut out, &header).unwrap();
        out.push(b'\n');
        for t in &self.trees {
            for i in 0..t.node_count() {
                out.extend_from_slice(&t.feature[i].to_le_bytes());
                out.extend_from_slice(&t.threshold[i].to_le_bytes());
                out.extend_from_slice(&t.left[i].to_le_bytes());
                out.extend_from_slice(&t.right[i].to_le_bytes());
                out.extend_from_slice(&t.value[i].to_le_bytes());
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Forest> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let loc = || path.display().to_string();
        let mut parts = bytes.splitn(3, |&b| b == b'\n');
        if parts.next() != Some(FOREST_MAGIC.as_bytes()) {
            return Err(Error::parse(loc(), "not a forest artifact"));
        }
        let header: ForestHeader =
            serde_json::from_slice(parts.next().unwrap_or_default()).map_err(|e| Error::parse(loc(), e))?;
        let blob = parts.next().unwrap_or_default();
        let total: usize = header.node_counts.iter().sum();
        if blob.len() != total * NODE_BYTES {
            return Err(Error::parse(
                loc(),
                format!("tree blob has {} bytes, header implies {}", blob.len(), total * NODE_BYTES),
            ));
        }
        let mut nodes = blob.chunks_exact(NODE_BYTES);
        let mut trees = Vec::with_capacity(header.node_counts.len());
        for &count in &header.node_counts {
            let mut t = Tree::default();
            for node in nodes.by_ref().take(count) {
                t.feature.push(i32::from_le_bytes(node[0..4].try_into().unwrap()));
                t.threshold.push(f64::from_le_bytes(node[4..12].try_into().unwrap()));
                t.left.push(u32::from_le_bytes(node[12..16].try_into().unwrap()));
                t.right.push(u32::from_le_bytes(node[16..20].try_into().unwrap()));
                t.value.push(f64::from_le_bytes(node[20..28].try_into().unwrap()));
            }
            let bad_child = (0..count).any(|i| {
                t.feature[i] >= 0 && (t.left[i] as usize >= count || t.right[i] as usize >= count)
            });
            let bad_feature = t.feature.iter().any(|&f| f >= header.feature_names.len() as i32);
            if count == 0 || bad_child || bad_feature {
                return Err(Error::parse(loc(), "malformed tree arrays"));
            }
            trees.push(t);
        }
        Ok(Forest {
            seed: header.seed,
            params: header.params,
            feature_names: header.feature_names,
            trees,
        })
    }
}

const FOREST_MAGIC: &str = "FREQLENS-FOREST 1";
const NODE_BYTES: usize = 4 + 8 + 4 + 4 + 8;

#[derive(Debug, Serialize, Deserialize)]
struct ForestHeader {
    seed: u64,
    params: ForestParams,
    feature_names: Vec<String>,
    node_counts: Vec<usize>,
}
