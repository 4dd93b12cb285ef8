// SPDX-License-Identifier: MIT OR Apache-2.0

//! Fit, sweep and per-example measurement of one relation.

use std::collections::BTreeSet;

use nalgebra::DVector;

use super::config::LreConfig;
use crate::error::{Error, Result};
use crate::lre::{
    argmax, default_beta_grid, evaluate, log_softmax, make_reference_model, per_example_metrics, rank_schedule,
    sweep_hyperparams, Lre, ReferenceModel, RelationData, RelationExample, RelationMetricsRow, RelationModel, SweepResult,
};
use crate::regress::{ExampleRecord, LmFeatures, LreFeatures};

#[derive(Debug, Clone)]
pub struct RelationMeasurement {
    pub relation: String,
    pub lre: Lre,
    pub sweep: SweepResult,
    pub metrics: RelationMetricsRow,
    pub records: Vec<ExampleRecord>,
}

pub fn example_id(index: usize) -> String {
    format!("e{index:04}")
}

/// Log-probability of the correct object and the fraction of `trials`
/// rotated contexts in which the model's top token is correct. Reads the
/// model at its last probe point.
pub fn lm_features(model: &dyn RelationModel, ex: &RelationExample, trials: u32) -> LmFeatures {
    let probe = model.probe_points().into_iter().max().unwrap_or(0);
    let s: DVector<f64> = ex.subject();
    let scores = model.decode(&model.forward(&s, ex.context_id, probe));
    let hits = (0..trials)
        .filter(|t| {
            let ctx = ex.context_id.wrapping_add(*t);
            argmax(&model.decode(&model.forward(&s, ctx, probe))) == ex.object_token
        })
        .count();
    LmFeatures {
        logprob_correct: log_softmax(&scores)[ex.object_token],
        fewshot_accuracy: hits as f64 / trials as f64,
    }
}

/// The reference model a relation file carries, checked against its examples.
pub fn relation_model(data: &RelationData) -> Result<ReferenceModel> {
    let spec = data.model.as_ref().ok_or_else(|| {
        Error::InvalidArgument(format!("relation {} has no reference model", data.relation))
    })?;
    let model = make_reference_model(spec);
    if let Some(bad) = data.examples.iter().find(|e| e.object_token >= model.vocab_size()) {
        return Err(Error::Dimension(format!(
            "relation {}: object token {} outside vocabulary of {}",
            data.relation,
            bad.object_token,
            model.vocab_size()
        )));
    }
    Ok(model)
}

/// Sweeps the configured grids and refits at the chosen configuration.
pub fn fit_relation(data: &RelationData, cfg: &LreConfig) -> Result<(Lre, SweepResult)> {
    let model = relation_model(data)?;
    let fit = data.fit_set(cfg.fit_examples)?;
    let full = model.subject_dim().min(model.object_dim());
    let betas = cfg.beta_grid.clone().unwrap_or_else(default_beta_grid);
    let ranks: Vec<usize> = match &cfg.ranks {
        Some(r) => r.iter().map(|&x| x.min(full)).collect::<BTreeSet<_>>().into_iter().collect(),
        None => rank_schedule(full),
    };
    let method = cfg.method();
    let sweep = sweep_hyperparams(&model, &fit, &data.examples, &betas, &ranks, &model.probe_points(), method)?;
    let lre = sweep.best_lre(&model, &fit, method)?;
    Ok((lre, sweep))
}

/// Relation-level metrics and one record per example for a fitted LRE.
pub fn measure_with_lre(
    data: &RelationData,
    lre: &Lre,
    cfg: &LreConfig,
) -> Result<(RelationMetricsRow, Vec<ExampleRecord>)> {
    let model = relation_model(data)?;
    let eval = &data.examples;
    let metrics = evaluate(lre, &model, eval)?;
    let per_example = per_example_metrics(lre, &model, eval)?;
    let records = eval
        .iter()
        .zip(per_example)
        .enumerate()
        .map(|(i, (ex, m))| ExampleRecord {
            relation_id: data.relation.clone(),
            example_id: example_id(i),
            subject_id: ex.subject_id,
            object_id: ex.object_id,
            lm: lm_features(&model, ex, cfg.fewshot_trials),
            lre: LreFeatures {
                faithfulness: m.faithfulness,
                faith_prob: m.faith_prob,
                soft_causality: m.soft_causality,
                hard_causality: m.hard_causality,
            },
        })
        .collect();
    let row = RelationMetricsRow {
        relation: data.relation.clone(),
        metrics,
        beta: lre.beta,
        rank: lre.rank,
        probe_point: lre.probe_point,
    };
    Ok((row, records))
}

pub fn measure_relation(data: &RelationData, cfg: &LreConfig) -> Result<RelationMeasurement> {
    let (lre, sweep) = fit_relation(data, cfg)?;
    let (metrics, records) = measure_with_lre(data, &lre, cfg)?;
    Ok(RelationMeasurement {
        relation: data.relation.clone(),
        lre,
        sweep,
        metrics,
        records,
    })
}
