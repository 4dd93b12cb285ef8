// SPDX-License-Identifier: MIT OR Apache-2.0

//! Versioned experiment configuration and its validation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::PairMode;
use crate::lre::{JacobianMethod, DEFAULT_FD_STEP, DEFAULT_FIT_EXAMPLES};
use crate::regress::{ForestParams, TargetKind, TreeParams, DEFAULT_TREES};
use crate::error::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Output directory, relative to the config file.
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub corpus: CorpusConfig,
    pub lre: LreConfig,
    #[serde(default)]
    pub regress: RegressConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub path: PathBuf,
    pub dictionary: PathBuf,
    #[serde(default)]
    pub pair_mode: PairMode,
    #[serde(default = "one")]
    pub shards: usize,
    /// Token budgets for cumulative counts; empty disables the stage.
    #[serde(default)]
    pub checkpoints: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianKind {
    Analytic,
    #[default]
    CentralDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LreConfig {
    /// Relation data files (JSON), each carrying its reference model.
    #[serde(default)]
    pub relations: Vec<PathBuf>,
    /// Per-example measurement table supplied from outside; replaces the
    /// fit, sweep and metrics stages.
    #[serde(default)]
    pub external_records: Option<PathBuf>,
    #[serde(default)]
    pub beta_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub ranks: Option<Vec<usize>>,
    #[serde(default = "default_fit")]
    pub fit_examples: usize,
    #[serde(default)]
    pub jacobian: JacobianKind,
    #[serde(default = "default_step")]
    pub fd_step: f64,
    #[serde(default = "default_trials")]
    pub fewshot_trials: u32,
}

impl Default for LreConfig {
    fn default() -> Self {
        LreConfig {
            relations: vec![],
            external_records: None,
            beta_grid: None,
            ranks: None,
            fit_examples: DEFAULT_FIT_EXAMPLES,
            jacobian: JacobianKind::default(),
            fd_step: DEFAULT_FD_STEP,
            fewshot_trials: default_trials(),
        }
    }
}

impl LreConfig {
    pub fn method(&self) -> JacobianMethod {
        match self.jacobian {
            JacobianKind::Analytic => JacobianMethod::Analytic,
            JacobianKind::CentralDifference => JacobianMethod::CentralDifference { h: self.fd_step },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub target_kind: TargetKind,
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    #[serde(default)]
    pub tree: TreeParams,
    #[serde(default = "default_repeats")]
    pub importance_repeats: usize,
    /// Features merged into their first principal component for importance.
    #[serde(default = "default_merge")]
    pub pca_merge: Vec<String>,
}

impl Default for RegressConfig {
    fn default() -> Self {
        RegressConfig {
            enabled: true,
            seeds: default_seeds(),
            target_kind: TargetKind::default(),
            n_trees: DEFAULT_TREES,
            tree: TreeParams::default(),
            importance_repeats: default_repeats(),
            pca_merge: default_merge(),
        }
    }
}

impl RegressConfig {
    pub fn forest_params(&self) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            bootstrap: true,
            tree: self.tree,
        }
    }
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_fit() -> usize {
    DEFAULT_FIT_EXAMPLES
}
fn default_step() -> f64 {
    DEFAULT_FD_STEP
}
fn default_trials() -> u32 {
    5
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3]
}
fn default_trees() -> usize {
    DEFAULT_TREES
}
fn default_repeats() -> usize {
    5
}
fn default_merge() -> Vec<String> {
    vec!["faithfulness".into(), "faith_prob".into()]
}

impl ExperimentConfig {
    pub fn parse(text: &str, location: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse(location, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}

/// A config together with the directory its relative paths resolve against.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub base: PathBuf,
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self> {
        let config = ExperimentConfig::load(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Experiment { config, base })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.config.out)
    }

    pub fn with_out(mut self, out: PathBuf) -> Self {
        self.config.out = if out.is_absolute() {
            out
        } else {
            std::env::current_dir().map(|d| d.join(&out)).unwrap_or(out)
        };
        self
    }

    /// Problems found without touching any state; empty means valid.
    pub fn validate(&self) -> Vec<String> {
        let c = &self.config;
        let mut problems = Vec::new();
        let mut need = |field: &str, p: &Path, dir: bool| {
            let full = self.resolve(p);
            let ok = if dir { full.is_dir() } else { full.is_file() };
            if !ok {
                problems.push(format!("{field}: {} does not exist", full.display()));
            }
        };
        need("corpus.path", &c.corpus.path, true);
        need("corpus.dictionary", &c.corpus.dictionary, false);
        for (i, r) in c.lre.relations.iter().enumerate() {
            need(&format!("lre.relations[{i}]"), r, false);
        }
        if let Some(p) = &c.lre.external_records {
            need("lre.external_records", p, false);
        }
        if c.version != CONFIG_VERSION {
            problems.push(format!("version: expected {CONFIG_VERSION}, found {}", c.version));
        }
        if c.lre.relations.is_empty() && c.lre.external_records.is_none() {
            problems.push("lre.relations: no relation files and no external_records".into());
        }
        if c.corpus.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            problems.push("corpus.checkpoints: cutoffs must be strictly increasing".into());
        }
        if c.corpus.checkpoints.first() == Some(&0) {
            problems.push("corpus.checkpoints: cutoffs must be positive".into());
        }
        if let Some(g) = &c.lre.beta_grid {
            if g.is_empty() || g.iter().any(|b| !b.is_finite() || *b < 0.0) {
                problems.push("lre.beta_grid: must be nonempty, finite and nonnegative".into());
            }
        }
        if let Some(r) = &c.lre.ranks {
            if r.is_empty() || r.contains(&0) {
                problems.push("lre.ranks: must be nonempty and positive".into());
            }
        }
        if c.lre.fit_examples == 0 {
            problems.push("lre.fit_examples: must be positive".into());
        }
        if !(c.lre.fd_step > 0.0) {
            problems.push("lre.fd_step: must be positive".into());
        }
        if c.lre.fewshot_trials == 0 {
            problems.push("lre.fewshot_trials: must be positive".into());
        }
        if c.regress.enabled {
            if c.regress.seeds.is_empty() {
                problems.push("regress.seeds: at least one seed is required".into());
            }
            if c.regress.n_trees == 0 {
                problems.push("regress.n_trees: must be positive".into());
            }
            if c.regress.importance_repeats == 0 {
                problems.push("regress.importance_repeats: must be positive".into());
            }
            if c.regress.pca_merge.len() == 1 {
                problems.push("regress.pca_merge: needs at least two features or none".into());
            }
            for f in &c.regress.pca_merge {
                if !crate::regress::ALL_FEATURES.contains(&f.as_str()) {
                    problems.push(format!("regress.pca_merge: unknown feature `{f}`"));
                }
            }
        }
        let out = self.out_dir();
        if out.exists() && !out.is_dir() {
            problems.push(format!("out: {} exists and is not a directory", out.display()));
        }
        problems
    }
}
