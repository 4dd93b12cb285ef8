// SPDX-License-Identifier: MIT OR Apache-2.0

//! Staged experiment runs. Each stage owns one directory under the run
//! directory and is skipped when the digest of its inputs, config subsection
//! and upstream outputs matches the previous run and its outputs are intact.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::Experiment;
use super::measure::{example_id, fit_relation, measure_with_lre};
use super::report::{write_report, RegressSummary, REPORT_DIR};
use crate::corpus::{
    cumulative_counts, scan_corpus, write_checkpoints, CheckpointSchedule, CountTable, Matcher, ScanOptions,
    TermDictionary, TokenCorpus, DOCS_FILE, MANIFEST_FILE, TOKENS_FILE,
};
use crate::error::{Error, Result};
use crate::lre::{load_lre, save_lre, write_metrics, RelationData};
use crate::regress::{
    build_feature_table, loro_cv, loro_importance, read_feature_table, read_records, train_forest,
    write_feature_table, write_records, Dataset, ExampleRecord, FeatureSet,
};

pub const MANIFEST: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lock";
pub const STAGES: [&str; 8] = ["count", "cooc", "checkpoints", "fit", "metrics", "features", "regress", "report"];

pub const COUNTS_DIR: &str = "counts";
pub const COOC_FILE: &str = "cooc/relation_pairs.tsv";
pub const CHECKPOINTS_DIR: &str = "checkpoints";
pub const RECORDS_FILE: &str = "features/records.tsv";
pub const FEATURES_FILE: &str = "features/features.tsv";
pub const REGRESS_SUMMARY: &str = "regress/summary.json";
pub const REGRESS_IMPORTANCE: &str = "regress/importance.tsv";

fn stage_dir(stage: &str) -> &'static str {
    match stage {
        "count" => COUNTS_DIR,
        "cooc" => "cooc",
        "checkpoints" => CHECKPOINTS_DIR,
        "fit" => "fit",
        "metrics" => "metrics",
        "features" => "features",
        "regress" => "regress",
        _ => REPORT_DIR,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Done,
    Cached,
    Disabled,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub input_digest: String,
    /// Run-directory-relative path to sha256.
    pub outputs: BTreeMap<String, String>,
    pub wall_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl StageRecord {
    pub fn succeeded(&self) -> bool {
        self.status != StageStatus::Failed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_digest: String,
    /// Checkpoint cutoffs, in tokens.
    pub checkpoints: Vec<u64>,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
    }

    pub fn save(&self, run_dir: &Path) -> Result<()> {
        let path = run_dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn sha256_str(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            files_under(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

fn digest_outputs(run_dir: &Path, dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut files = Vec::new();
    if dir.is_dir() {
        files_under(dir, &mut files).map_err(|e| Error::io(dir, e))?;
    }
    files
        .into_iter()
        .map(|f| {
            let rel = f.strip_prefix(run_dir).expect("output under run dir");
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            Ok((key, sha256_file(&f)?))
        })
        .collect()
}

fn remove_dir(dir: &Path) -> Result<()> {
    match fs::remove_dir_all(dir) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => Err(Error::io(dir, e)),
        _ => Ok(()),
    }
}

/// Exclusive ownership of a run directory; released on drop.
struct RunLock(PathBuf);

impl RunLock {
    fn acquire(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => {
                let _ = fs::write(&path, format!("{}\n", std::process::id()));
                Ok(RunLock(path))
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

struct Runner {
    out: PathBuf,
    previous: Option<RunManifest>,
    manifest: RunManifest,
    /// Combined output digest per finished stage.
    produced: HashMap<String, String>,
    file_digests: HashMap<PathBuf, String>,
}

impl Runner {
    fn input_digest(&self, path: &Path) -> Result<String> {
        match self.file_digests.get(path) {
            Some(d) => Ok(d.clone()),
            None => sha256_file(path),
        }
    }

    fn stage(
        &mut self,
        name: &str,
        enabled: bool,
        subsection: Value,
        inputs: &[PathBuf],
        upstream: &[&str],
        body: impl FnOnce(&Path) -> Result<()>,
    ) -> Result<()> {
        let start = Instant::now();
        let mut key = format!("stage {name}\ntool {}\nconfig {subsection}\n", env!("CARGO_PKG_VERSION"));
        for p in inputs {
            let d = self.input_digest(p)?;
            self.file_digests.insert(p.clone(), d.clone());
            key.push_str(&format!("input {d}\n"));
        }
        for u in upstream {
            key.push_str(&format!("upstream {u} {}\n", self.produced.get(*u).map(String::as_str).unwrap_or("-")));
        }
        let input_digest = sha256_str(&key);
        let dir = self.out.join(stage_dir(name));

        let (status, outputs, message) = if !enabled {
            remove_dir(&dir)?;
            (StageStatus::Disabled, BTreeMap::new(), None)
        } else if let Some(outputs) = self.cached_outputs(name, &input_digest, &dir)? {
            (StageStatus::Cached, outputs, None)
        } else {
            remove_dir(&dir)?;
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            match body(&dir) {
                Ok(()) => (StageStatus::Done, digest_outputs(&self.out, &dir)?, None),
                Err(e) => (StageStatus::Failed, BTreeMap::new(), Some(e.to_string())),
            }
        };
        let combined = if enabled {
            sha256_str(&serde_json::to_string(&outputs).expect("digests serialize"))
        } else {
            "disabled".to_string()
        };
        self.produced.insert(name.to_string(), combined);
        self.manifest.stages.push(StageRecord {
            name: name.to_string(),
            status,
            input_digest,
            outputs,
            wall_ms: start.elapsed().as_millis() as u64,
            message: message.clone(),
        });
        self.manifest.save(&self.out)?;
        match message {
            Some(message) => Err(Error::Stage {
                stage: name.to_string(),
                message,
            }),
            None => Ok(()),
        }
    }

    fn cached_outputs(&self, name: &str, digest: &str, dir: &Path) -> Result<Option<BTreeMap<String, String>>> {
        let Some(prev) = self.previous.as_ref().and_then(|m| m.stage(name)) else {
            return Ok(None);
        };
        if prev.input_digest != digest || !matches!(prev.status, StageStatus::Done | StageStatus::Cached) {
            return Ok(None);
        }
        let current = digest_outputs(&self.out, dir)?;
        Ok((current == prev.outputs).then_some(current))
    }
}

fn corpus_files(dir: &Path) -> Vec<PathBuf> {
    let mut files = vec![dir.join(MANIFEST_FILE), dir.join(TOKENS_FILE)];
    if dir.join(DOCS_FILE).is_file() {
        files.push(dir.join(DOCS_FILE));
    }
    files
}

fn load_relations(paths: &[PathBuf]) -> Result<Vec<RelationData>> {
    let mut rels = paths.iter().map(|p| RelationData::load(p)).collect::<Result<Vec<_>>>()?;
    let mut seen = BTreeSet::new();
    for r in &rels {
        if !seen.insert(r.relation.clone()) {
            return Err(Error::InvalidArgument(format!("relation `{}` appears twice", r.relation)));
        }
    }
    rels.sort_by(|a, b| a.relation.cmp(&b.relation));
    Ok(rels)
}

/// Subject and object ids per example, keyed the same way example records are.
fn relation_pairs(relations: &[RelationData]) -> Vec<(String, String, u32, u32)> {
    relations
        .iter()
        .flat_map(|r| {
            r.examples
                .iter()
                .enumerate()
                .map(|(i, ex)| (r.relation.clone(), example_id(i), ex.subject_id, ex.object_id))
        })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs every stage in order and returns the manifest. A failing stage is
/// recorded before the error is returned.
pub fn run(exp: &Experiment, shards: usize) -> Result<RunManifest> {
    let problems = exp.validate();
    if !problems.is_empty() {
        return Err(Error::InvalidArgument(format!("invalid config: {}", problems.join("; "))));
    }
    let c = &exp.config;
    let out = exp.out_dir();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let _lock = RunLock::acquire(&out)?;
    let previous = if out.join(MANIFEST).is_file() {
        RunManifest::load(&out).ok()
    } else {
        None
    };
    let config_json = serde_json::to_value(c).expect("config serializes");
    let mut runner = Runner {
        out: out.clone(),
        previous,
        manifest: RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: sha256_str(&config_json.to_string()),
            checkpoints: c.corpus.checkpoints.clone(),
            stages: Vec::new(),
        },
        produced: HashMap::new(),
        file_digests: HashMap::new(),
    };

    let corpus_dir = exp.resolve(&c.corpus.path);
    let dict_path = exp.resolve(&c.corpus.dictionary);
    let mut corpus_inputs = corpus_files(&corpus_dir);
    corpus_inputs.push(dict_path.clone());
    let relation_paths: Vec<PathBuf> = c.lre.relations.iter().map(|p| exp.resolve(p)).collect();
    let external = c.lre.external_records.as_ref().map(|p| exp.resolve(p));
    let pair_source: Vec<PathBuf> = match &external {
        Some(p) => vec![p.clone()],
        None => relation_paths.clone(),
    };
    let opts = ScanOptions {
        emit_positions: false,
        pair_mode: c.corpus.pair_mode,
        shards: shards.max(c.corpus.shards),
    };
    let load_corpus = || -> Result<(Matcher, TokenCorpus)> {
        let dict = TermDictionary::load(&dict_path)?;
        Ok((Matcher::compile(&dict), TokenCorpus::load(&corpus_dir)?))
    };

    runner.stage(
        "count",
        true,
        json!({ "pair_mode": c.corpus.pair_mode }),
        &corpus_inputs,
        &[],
        |dir| {
            let (m, corpus) = load_corpus()?;
            scan_corpus(&m, &corpus, &opts).counts.write_dir(dir)
        },
    )?;

    let out_ref = &out;
    runner.stage("cooc", true, json!({ "external": external.is_some() }), &pair_source, &["count"], |dir| {
        let counts = CountTable::read_dir(&out_ref.join(COUNTS_DIR))?;
        let pairs = match &external {
            Some(p) => read_records(p)?
                .into_iter()
                .map(|r| (r.relation_id, r.example_id, r.subject_id, r.object_id))
                .collect(),
            None => relation_pairs(&load_relations(&relation_paths)?),
        };
        let mut text = String::from("relation_id\texample_id\tsubject_id\tobject_id\tobject_count\tpair_count\n");
        for (rel, ex, s, o) in pairs {
            text.push_str(&format!("{rel}\t{ex}\t{s}\t{o}\t{}\t{}\n", counts.occurrence(o), counts.pair(s, o)));
        }
        write_text(&dir.join("relation_pairs.tsv"), &text)
    })?;

    runner.stage(
        "checkpoints",
        !c.corpus.checkpoints.is_empty(),
        json!({ "pair_mode": c.corpus.pair_mode, "cutoffs": c.corpus.checkpoints }),
        &corpus_inputs,
        &[],
        |dir| {
            let (m, corpus) = load_corpus()?;
            let schedule = CheckpointSchedule::new(c.corpus.checkpoints.clone())?;
            write_checkpoints(dir, &cumulative_counts(&m, &corpus, &schedule, &opts)?)
        },
    )?;

    let lre_json = json!({
        "beta_grid": c.lre.beta_grid,
        "ranks": c.lre.ranks,
        "fit_examples": c.lre.fit_examples,
        "jacobian": c.lre.jacobian,
        "fd_step": c.lre.fd_step,
    });
    let internal = external.is_none();
    runner.stage("fit", internal, lre_json.clone(), &relation_paths, &[], |dir| {
        for rel in load_relations(&relation_paths)? {
            let (lre, sweep) = fit_relation(&rel, &c.lre)?;
            save_lre(&dir.join(format!("{}.lre", rel.relation)), &rel.relation, &lre)?;
            let text = serde_json::to_string_pretty(&sweep).expect("sweep serializes");
            write_text(&dir.join(format!("{}.sweep.json", rel.relation)), &(text + "\n"))?;
        }
        Ok(())
    })?;

    runner.stage(
        "metrics",
        internal,
        json!({ "fewshot_trials": c.lre.fewshot_trials }),
        &relation_paths,
        &["fit"],
        |dir| {
            let mut rows = Vec::new();
            let mut records = Vec::new();
            for rel in load_relations(&relation_paths)? {
                let (_, lre) = load_lre(&out_ref.join("fit").join(format!("{}.lre", rel.relation)))?;
                let (row, recs) = measure_with_lre(&rel, &lre, &c.lre)?;
                rows.push(row);
                records.extend(recs);
            }
            write_metrics(&dir.join("relation_metrics.tsv"), &rows)?;
            write_records(&dir.join("example_records.tsv"), &records)
        },
    )?;

    runner.stage(
        "features",
        true,
        json!({ "target_kind": c.regress.target_kind }),
        &[&pair_source[..], std::slice::from_ref(&dict_path)].concat(),
        &["count", "metrics"],
        |dir| {
            let records: Vec<ExampleRecord> = match &external {
                Some(p) => read_records(p)?,
                None => read_records(&out_ref.join("metrics/example_records.tsv"))?,
            };
            let counts = CountTable::read_dir(&out_ref.join(COUNTS_DIR))?;
            let n_terms = TermDictionary::load(&dict_path)?.len();
            let rows = build_feature_table(&records, &counts, n_terms, c.regress.target_kind)?;
            write_records(&dir.join("records.tsv"), &records)?;
            write_feature_table(&dir.join("features.tsv"), &rows)
        },
    )?;

    let regress_json = json!({ "regress": c.regress, "seed": c.seed });
    runner.stage("regress", c.regress.enabled, regress_json, &[], &["features"], |dir| {
        let rows = read_feature_table(&out_ref.join(FEATURES_FILE))?;
        let params = c.regress.forest_params();
        let seeds = &c.regress.seeds;
        let with_lre = loro_cv(&rows, FeatureSet::LmAndLre, seeds, &params)?;
        let lm_only = loro_cv(&rows, FeatureSet::LmOnly, seeds, &params)?;
        let merge: Vec<&str> = c.regress.pca_merge.iter().map(String::as_str).collect();
        let importance = loro_importance(&rows, seeds, &params, &merge, c.regress.importance_repeats)?;
        let names = FeatureSet::LmAndLre.names();
        let data = Dataset::from_rows(&rows, &names)?;
        train_forest(&data.x, &data.y, &names, &params, c.seed)?.save(&dir.join("forest.bin"))?;
        write_text(&dir.join("loro_lm_and_lre.tsv"), &with_lre.to_tsv())?;
        write_text(&dir.join("loro_lm_only.tsv"), &lm_only.to_tsv())?;
        write_text(&dir.join("importance.tsv"), &importance.to_tsv())?;
        let summary = RegressSummary::new(&c.regress, &[&with_lre, &lm_only], importance);
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        write_text(&dir.join("summary.json"), &(text + "\n"))
    })?;

    let manifest_so_far = runner.manifest.clone();
    runner.stage(
        "report",
        true,
        Value::Null,
        &[],
        &["count", "cooc", "checkpoints", "fit", "metrics", "features", "regress"],
        |_| write_report(out_ref, &manifest_so_far),
    )?;
    Ok(runner.manifest)
}
