// SPDX-License-Identifier: MIT OR Apache-2.0

//! Summary tables built from a finished run directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RegressConfig;
use super::run::{
    RunManifest, StageStatus, CHECKPOINTS_DIR, COOC_FILE, MANIFEST, RECORDS_FILE, REGRESS_IMPORTANCE,
    REGRESS_SUMMARY, STAGES,
};
use crate::corpus::read_checkpoints;
use crate::error::{Error, Result};
use crate::lre::SOFT_CAUSALITY_CONVENTION;
use crate::regress::{mean, pearson, read_records, ImportanceReport, LoroReport, MeanStd, TargetKind, TreeParams};

pub const REPORT_DIR: &str = "report";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoroSummary {
    pub feature_set: String,
    pub feature_names: Vec<String>,
    pub n_folds: usize,
    pub accuracy: MeanStd,
    pub mae_ln: MeanStd,
    pub mean_baseline: MeanStd,
    pub random_baseline: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressSummary {
    pub target_kind: TargetKind,
    pub n_trees: usize,
    pub tree: TreeParams,
    pub seeds: Vec<u64>,
    pub loro: Vec<LoroSummary>,
    pub importance: ImportanceReport,
}

impl RegressSummary {
    pub fn new(cfg: &RegressConfig, reports: &[&LoroReport], importance: ImportanceReport) -> Self {
        RegressSummary {
            target_kind: cfg.target_kind,
            n_trees: cfg.n_trees,
            tree: cfg.tree,
            seeds: cfg.seeds.clone(),
            loro: reports
                .iter()
                .map(|r| LoroSummary {
                    feature_set: r.feature_set.clone(),
                    feature_names: r.feature_names.clone(),
                    n_folds: r.folds.len(),
                    accuracy: r.accuracy,
                    mae_ln: r.mae_ln,
                    mean_baseline: r.mean_baseline,
                    random_baseline: r.random_baseline,
                })
                .collect(),
            importance,
        }
    }
}

/// Stages whose outputs the report reads; all must have finished.
fn required() -> Vec<&'static str> {
    STAGES.iter().copied().filter(|s| *s != "report").collect()
}

fn complete_manifest(run_dir: &Path) -> Result<RunManifest> {
    if !run_dir.join(MANIFEST).is_file() {
        return Err(Error::IncompleteRun(required().into_iter().map(String::from).collect()));
    }
    let manifest = RunManifest::load(run_dir)?;
    let missing: Vec<String> = required()
        .into_iter()
        .filter(|s| !manifest.stage(s).is_some_and(|r| r.succeeded()))
        .map(String::from)
        .collect();
    if missing.is_empty() {
        Ok(manifest)
    } else {
        Err(Error::IncompleteRun(missing))
    }
}

/// Regenerates the report tables of a finished run and returns their directory.
pub fn report(run_dir: &Path) -> Result<PathBuf> {
    let manifest = complete_manifest(run_dir)?;
    write_report(run_dir, &manifest)?;
    Ok(run_dir.join(REPORT_DIR))
}

struct PairRow {
    relation: String,
    subject: u32,
    object: u32,
    object_count: u64,
    pair_count: u64,
}

fn read_pairs(path: &Path) -> Result<Vec<PairRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let loc = || format!("{}:{}", path.display(), i + 1);
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(Error::parse(loc(), format!("expected 6 columns, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<u64>().map_err(|e| Error::parse(loc(), e));
            Ok(PairRow {
                relation: f[0].to_string(),
                subject: num(f[2])? as u32,
                object: num(f[3])? as u32,
                object_count: num(f[4])?,
                pair_count: num(f[5])?,
            })
        })
        .collect()
}

fn fmt_r(r: Result<f64>) -> String {
    match r {
        Ok(v) => format!("{v:.6}"),
        Err(_) => "NA".into(),
    }
}

pub(crate) fn write_report(run_dir: &Path, manifest: &RunManifest) -> Result<()> {
    let dir = run_dir.join(REPORT_DIR);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let records = read_records(&run_dir.join(RECORDS_FILE))?;
    let pairs = read_pairs(&run_dir.join(COOC_FILE))?;

    #[derive(Default)]
    struct Agg {
        n: usize,
        faith: Vec<f64>,
        faith_prob: Vec<f64>,
        soft: Vec<f64>,
        hard: Vec<f64>,
    }
    let mut by_rel: BTreeMap<&str, Agg> = BTreeMap::new();
    for r in &records {
        let a = by_rel.entry(&r.relation_id).or_default();
        a.n += 1;
        a.faith.push(r.lre.faithfulness);
        a.faith_prob.push(r.lre.faith_prob);
        a.soft.push(r.lre.soft_causality);
        a.hard.push(r.lre.hard_causality);
    }
    let mut rel_pairs: BTreeMap<&str, Vec<&PairRow>> = BTreeMap::new();
    for p in &pairs {
        rel_pairs.entry(&p.relation).or_default().push(p);
    }
    let relations: Vec<&str> = by_rel.keys().copied().collect();
    let mean_of = |rel: &str, f: &dyn Fn(&PairRow) -> f64| -> f64 {
        let v: Vec<f64> = rel_pairs.get(rel).map(|ps| ps.iter().map(|p| f(p)).collect()).unwrap_or_default();
        if v.is_empty() {
            0.0
        } else {
            mean(&v)
        }
    };

    let mut metrics = format!(
        "# {SOFT_CAUSALITY_CONVENTION}\nrelation\tn_examples\tmean_object_count\tmean_pair_count\tfaithfulness\tfaith_prob\tsoft_causality\thard_causality\n"
    );
    for rel in &relations {
        let a = &by_rel[rel];
        let _ = writeln!(
            metrics,
            "{rel}\t{}\t{:.3}\t{:.3}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            a.n,
            mean_of(rel, &|p| p.object_count as f64),
            mean_of(rel, &|p| p.pair_count as f64),
            mean(&a.faith),
            mean(&a.faith_prob),
            mean(&a.soft),
            mean(&a.hard)
        );
    }
    fs::write(dir.join("relation_metrics.tsv"), metrics).map_err(|e| Error::io(&dir, e))?;

    // Frequency per relation per checkpoint: mean subject-object count over
    // the relation's examples, against the relation's hard causality.
    let mut series: Vec<(String, String, BTreeMap<&str, f64>)> = Vec::new();
    let checkpoints_ran = manifest.stage("checkpoints").is_some_and(|s| s.status != StageStatus::Disabled);
    if checkpoints_ran {
        for (i, (cutoff, table)) in read_checkpoints(&run_dir.join(CHECKPOINTS_DIR), &manifest.checkpoints)?
            .into_iter()
            .enumerate()
        {
            let freq = relations
                .iter()
                .map(|rel| (*rel, mean_of(rel, &|p| table.pair(p.subject, p.object) as f64)))
                .collect();
            series.push((format!("ckpt{}", i + 1), cutoff.to_string(), freq));
        }
    } else {
        let freq = relations.iter().map(|rel| (*rel, mean_of(rel, &|p| p.pair_count as f64))).collect();
        series.push(("full".into(), "all".into(), freq));
    }
    let mut scatter = String::from("checkpoint\tcutoff_tokens\trelation\tmean_pair_count\tlog10_1p_mean_pair_count\thard_causality\n");
    let mut correlation = String::from("checkpoint\tcutoff_tokens\tn_relations\tpearson_r\n");
    for (label, cutoff, freq) in &series {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for rel in &relations {
            let f = freq[rel];
            let hard = mean(&by_rel[rel].hard);
            let _ = writeln!(scatter, "{label}\t{cutoff}\t{rel}\t{f:.3}\t{:.6}\t{hard:.6}", f.ln_1p() / std::f64::consts::LN_10);
            xs.push(f.ln_1p() / std::f64::consts::LN_10);
            ys.push(hard);
        }
        let _ = writeln!(correlation, "{label}\t{cutoff}\t{}\t{}", relations.len(), fmt_r(pearson(&xs, &ys)));
    }
    fs::write(dir.join("scatter.tsv"), scatter).map_err(|e| Error::io(&dir, e))?;
    fs::write(dir.join("correlation.tsv"), correlation).map_err(|e| Error::io(&dir, e))?;

    let regressed = manifest.stage("regress").is_some_and(|s| s.status != StageStatus::Disabled);
    if regressed {
        let path = run_dir.join(REGRESS_SUMMARY);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let summary: RegressSummary =
            serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        fs::write(dir.join("regression.tsv"), regression_table(&summary)).map_err(|e| Error::io(&dir, e))?;
        let imp = run_dir.join(REGRESS_IMPORTANCE);
        fs::copy(&imp, dir.join("importance.tsv")).map_err(|e| Error::io(&imp, e))?;
    }
    Ok(())
}

fn regression_table(s: &RegressSummary) -> String {
    let t = &s.tree;
    let depth = t.max_depth.map_or("none".to_string(), |d| d.to_string());
    let seeds: Vec<String> = s.seeds.iter().map(u64::to_string).collect();
    let mut out = format!(
        "# target=ln(1+count) target_kind={} metric=within one order of magnitude, predictions clamped to >= 1 count\n\
         # forest n_trees={} bootstrap=true max_depth={depth} min_samples_leaf={} min_samples_split={} seeds={}\n\
         model\tn_folds\twithin_magnitude_accuracy\taccuracy_std\tmae_ln\tmae_ln_std\n",
        s.target_kind,
        s.n_trees,
        t.min_samples_leaf,
        t.min_samples_split,
        seeds.join(",")
    );
    for l in &s.loro {
        let _ = writeln!(
            out,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            l.feature_set, l.n_folds, l.accuracy.mean, l.accuracy.std, l.mae_ln.mean, l.mae_ln.std
        );
    }
    if let Some(l) = s.loro.first() {
        for (name, b) in [("mean_baseline", l.mean_baseline), ("random_baseline", l.random_baseline)] {
            let _ = writeln!(out, "{name}\t{}\t{:.6}\t{:.6}\t-\t-", l.n_folds, b.mean, b.std);
        }
    }
    out
}
