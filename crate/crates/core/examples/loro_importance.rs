// SPDX-License-Identifier: MIT OR Apache-2.0

//! Builds a feature table from a small planted experiment, then runs
//! leave-one-relation-out regression and held-out permutation importance.

use freqlens::corpus::{generate_synthetic_corpus, TermDictionary};
use freqlens::pipeline::{measure_relation, plant_experiment, LreConfig, PlantedSpec};
use freqlens::regress::{build_feature_table, loro_cv, loro_importance, FeatureSet, ForestParams, TargetKind};

fn main() -> freqlens::error::Result<()> {
    let spec = PlantedSpec {
        n_relations: 8,
        examples_per_relation: 16,
        ..Default::default()
    };
    let exp = plant_experiment(&spec)?;
    let (_, truth) = generate_synthetic_corpus(&exp.synth)?;
    let cfg = LreConfig::default();
    let mut records = Vec::new();
    for rel in &exp.relations {
        let m = measure_relation(rel, &cfg)?;
        println!("{}: hard causality {:.3}", m.relation, m.metrics.metrics.hard_causality);
        records.extend(m.records);
    }
    let dict: &TermDictionary = &exp.dictionary;
    let rows = build_feature_table(&records, &truth, dict.len(), TargetKind::SubjectObject)?;
    let params = ForestParams {
        n_trees: 30,
        ..Default::default()
    };
    for set in [FeatureSet::LmAndLre, FeatureSet::LmOnly] {
        let r = loro_cv(&rows, set, &[0, 1], &params)?;
        println!("{set}: accuracy {:.3} ± {:.3}", r.accuracy.mean, r.accuracy.std);
    }
    print!("{}", loro_importance(&rows, &[0], &params, &["faithfulness", "faith_prob"], 3)?.to_tsv());
    Ok(())
}
