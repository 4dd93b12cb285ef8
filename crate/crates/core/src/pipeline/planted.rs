// SPDX-License-Identifier: MIT OR Apache-2.0

//! Planted-frequency experiment: a synthetic corpus whose subject-object
//! co-occurrence counts are set per relation, paired with reference models
//! whose nonlinear branch shrinks as the relation's planted frequency grows.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{CorpusConfig, ExperimentConfig, LreConfig, RegressConfig, CONFIG_VERSION};
use crate::corpus::{
    generate_synthetic_corpus, CorpusShape, CountTable, PairMode, SynthSpec, TermDictionary, TermEntry, TermId,
    TokenCorpus,
};
use crate::error::{Error, Result};
use crate::lre::{
    argmax, make_reference_model, ReferenceKind, ReferenceSpec, RelationData, RelationExample,
    RelationModel,
};
use crate::regress::splitmix64;

/// Term patterns use tokens at or above this value; filler stays below.
const TERM_TOKEN_BASE: u32 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantedSpec {
    pub n_relations: usize,
    pub examples_per_relation: usize,
    pub objects_per_relation: usize,
    pub dim: usize,
    pub hidden_dim: usize,
    /// Relation frequency levels are evenly spaced over this log10 range.
    pub log10_min: f64,
    pub log10_max: f64,
    /// Per-example uniform log10 offset.
    pub jitter: f64,
    /// Nonlinear weight for the most and least frequent relation.
    pub noise_min: f64,
    pub noise_max: f64,
    /// Standard deviation of subject coordinates; the model's own answer
    /// for each subject becomes its object.
    pub subject_scale: f64,
    pub seq_len: u32,
    pub batch_size: u32,
    /// Checkpoint budgets as fractions of the corpus.
    pub checkpoint_fractions: Vec<f64>,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            n_relations: 16,
            examples_per_relation: 24,
            objects_per_relation: 6,
            dim: 12,
            hidden_dim: 16,
            log10_min: 0.5,
            log10_max: 4.0,
            jitter: 0.4,
            noise_min: 0.0,
            noise_max: 3.0,
            subject_scale: 2.0,
            seq_len: 8,
            batch_size: 512,
            checkpoint_fractions: vec![0.25, 0.5, 1.0],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedExperiment {
    pub dictionary: TermDictionary,
    pub synth: SynthSpec,
    pub relations: Vec<RelationData>,
    /// Planted log10 level per relation, in `relations` order.
    pub levels: Vec<f64>,
    pub checkpoints: Vec<u64>,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Builds everything in memory; no corpus tokens are generated yet.
pub fn plant_experiment(spec: &PlantedSpec) -> Result<PlantedExperiment> {
    let (r_n, n, m) = (spec.n_relations, spec.examples_per_relation, spec.objects_per_relation);
    if r_n < 2 || n < 2 || m < 2 || spec.dim == 0 {
        return Err(Error::InvalidArgument(
            "planted experiment needs at least two relations, examples and objects".into(),
        ));
    }
    if !(spec.log10_max >= spec.log10_min) || spec.jitter < 0.0 {
        return Err(Error::InvalidArgument("invalid planted frequency range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut seed_state = spec.seed;
    let mut levels: Vec<f64> = (0..r_n)
        .map(|r| spec.log10_min + (spec.log10_max - spec.log10_min) * r as f64 / (r_n - 1) as f64)
        .collect();
    levels.shuffle(&mut rng);

    let per_relation = n + m;
    let mut entries = Vec::new();
    let mut relations = Vec::new();
    let mut pairs = Vec::new();
    for (r, &level) in levels.iter().enumerate() {
        let name = format!("rel{r:02}");
        let base = (r * per_relation) as TermId;
        for i in 0..per_relation {
            let id = base + i as TermId;
            let surface = if i < n {
                format!("{name}/s{i:03}")
            } else {
                format!("{name}/o{:02}", i - n)
            };
            entries.push(TermEntry {
                term_id: id,
                surface,
                patterns: vec![vec![TERM_TOKEN_BASE + id]],
            });
        }

        let frac = if spec.log10_max > spec.log10_min {
            (level - spec.log10_min) / (spec.log10_max - spec.log10_min)
        } else {
            1.0
        };
        let model_spec = ReferenceSpec {
            kind: ReferenceKind::Mlp,
            subject_dim: spec.dim,
            object_dim: spec.dim,
            vocab_size: m,
            hidden_dim: spec.hidden_dim,
            n_contexts: 5,
            seed: splitmix64(&mut seed_state),
            noise: vec![spec.noise_max + (spec.noise_min - spec.noise_max) * frac],
        };
        let model = make_reference_model(&model_spec);
        let mut examples = Vec::with_capacity(n);
        for i in 0..n {
            let s = DVector::from_fn(spec.dim, |_, _| gaussian(&mut rng) * spec.subject_scale);
            let context = (i % 5) as u32;
            let token = argmax(&model.decode(&model.forward(&s, context, 0)));
            let subject_id = base + i as TermId;
            let object_id = base + (n + token) as TermId;
            examples.push(RelationExample {
                subject_id,
                subject_vector: s.iter().copied().collect(),
                context_id: context,
                object_token: token,
                object_id,
                subject_surface: format!("{name}/s{i:03}"),
                object_surface: format!("{name}/o{token:02}"),
            });
            let offset = rng.random_range(-spec.jitter..=spec.jitter);
            let count = (10f64.powf(level + offset).round() as u64).max(2);
            pairs.push((subject_id, object_id, count));
        }
        relations.push(RelationData {
            relation: name,
            model: Some(model_spec),
            fit_examples: None,
            examples,
        });
    }

    let dictionary = TermDictionary::new(entries)?;
    let rows: u64 = pairs.iter().map(|p| p.2).sum();
    let batch_size = spec.batch_size.max(1);
    let n_batches = (rows + rows / 4).div_ceil(batch_size as u64).max(1) as u32;
    let batch_tokens = batch_size as u64 * spec.seq_len as u64;
    let mut checkpoints: Vec<u64> = spec
        .checkpoint_fractions
        .iter()
        .map(|f| ((f.clamp(0.0, 1.0) * n_batches as f64).ceil() as u64).max(1) * batch_tokens)
        .collect();
    checkpoints.sort_unstable();
    checkpoints.dedup();

    Ok(PlantedExperiment {
        synth: SynthSpec {
            dictionary: dictionary.clone(),
            pair_counts: pairs,
            term_counts: vec![],
            filler_vocab: TERM_TOKEN_BASE,
            shape: CorpusShape {
                batch_size,
                seq_len: spec.seq_len,
                n_batches,
            },
            seed: splitmix64(&mut seed_state),
            tokenizer_id: "planted".into(),
        },
        dictionary,
        relations,
        levels,
        checkpoints,
    })
}

pub const PLANTED_CONFIG: &str = "experiment.toml";

/// Writes the dictionary, corpus, relation files, planted truth and an
/// experiment config into `dir`, and returns the config path.
pub fn write_planted(spec: &PlantedSpec, dir: &Path) -> Result<PathBuf> {
    let exp = plant_experiment(spec)?;
    let (corpus, truth): (TokenCorpus, CountTable) = generate_synthetic_corpus(&exp.synth)?;
    fs::create_dir_all(dir.join("relations")).map_err(|e| Error::io(dir, e))?;
    exp.dictionary.save(&dir.join("dictionary.jsonl"))?;
    corpus.save(&dir.join("corpus"))?;
    let truth_dir = dir.join("truth");
    fs::create_dir_all(&truth_dir).map_err(|e| Error::io(&truth_dir, e))?;
    truth.write_dir(&truth_dir)?;
    let mut rel_paths = Vec::new();
    for r in &exp.relations {
        let rel = PathBuf::from("relations").join(format!("{}.json", r.relation));
        r.save(&dir.join(&rel))?;
        rel_paths.push(rel);
    }
    let config = ExperimentConfig {
        version: CONFIG_VERSION,
        seed: spec.seed,
        out: PathBuf::from("out"),
        corpus: CorpusConfig {
            path: "corpus".into(),
            dictionary: "dictionary.jsonl".into(),
            pair_mode: PairMode::Presence,
            shards: 1,
            checkpoints: exp.checkpoints.clone(),
        },
        lre: LreConfig {
            relations: rel_paths,
            ..Default::default()
        },
        regress: RegressConfig::default(),
    };
    let path = dir.join(PLANTED_CONFIG);
    config.save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PlantedSpec {
        PlantedSpec {
            n_relations: 3,
            examples_per_relation: 6,
            objects_per_relation: 3,
            dim: 4,
            log10_min: 0.5,
            log10_max: 1.5,
            batch_size: 16,
            ..Default::default()
        }
    }

    #[test]
    fn counts_follow_levels() {
        let exp = plant_experiment(&small()).unwrap();
        for (rel, level) in exp.relations.iter().zip(&exp.levels) {
            for ex in &rel.examples {
                let c = exp.synth.pair_counts.iter().find(|p| p.0 == ex.subject_id).unwrap().2;
                let lc = (c as f64).log10();
                assert!(c >= 2 && (lc - level).abs() <= 0.4 + 0.05, "{c} vs level {level}");
            }
        }
        assert!(exp.checkpoints.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn noise_decreases_with_level() {
        let exp = plant_experiment(&small()).unwrap();
        let mut by_level: Vec<(f64, f64)> = exp
            .relations
            .iter()
            .zip(&exp.levels)
            .map(|(r, &l)| (l, r.model.as_ref().unwrap().noise[0]))
            .collect();
        by_level.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(by_level.windows(2).all(|w| w[0].1 > w[1].1));
    }

    #[test]
    fn written_corpus_matches_truth() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_planted(&small(), dir.path()).unwrap();
        assert!(cfg.is_file());
        let dict = TermDictionary::load(&dir.path().join("dictionary.jsonl")).unwrap();
        let corpus = TokenCorpus::load(&dir.path().join("corpus")).unwrap();
        let counts = crate::corpus::scan_corpus(&crate::corpus::Matcher::compile(&dict), &corpus, &Default::default()).counts;
        assert_eq!(counts, CountTable::read_dir(&dir.path().join("truth")).unwrap());
    }
}
