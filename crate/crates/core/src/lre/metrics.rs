// SPDX-License-Identifier: MIT OR Apache-2.0

//! Faithfulness, faith probability and causality of a fitted LRE.
//!
//! Soft causality here means: after the edit, the target object's score is
//! strictly above the score of the source's original object. This is a local
//! convention and is labelled as such in every metrics report.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::fit::{lre_apply, Lre, RelationExample};
use super::linalg::low_rank_pinv;
use super::model::{argmax, log_softmax, RelationModel};
use crate::error::{Error, Result};

pub const SOFT_CAUSALITY_CONVENTION: &str =
    "soft_causality: edited score of target object > edited score of source object";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LreMetrics {
    pub faithfulness: f64,
    pub faith_prob: f64,
    pub soft_causality: f64,
    pub hard_causality: f64,
    pub n_eval: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Causality {
    pub soft: f64,
    pub hard: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditOutcome {
    pub edited_subject: DVector<f64>,
    pub token: usize,
    pub scores: DVector<f64>,
}

fn model_token(model: &dyn RelationModel, ex: &RelationExample, probe: usize) -> usize {
    argmax(&model.decode(&model.forward(&ex.subject(), ex.context_id, probe)))
}

fn is_faithful(lre: &Lre, model: &dyn RelationModel, ex: &RelationExample) -> bool {
    let s = ex.subject();
    argmax(&model.decode(&lre_apply(lre, &s))) == model_token(model, ex, lre.probe_point)
}

fn lre_log_prob(lre: &Lre, model: &dyn RelationModel, ex: &RelationExample) -> f64 {
    log_softmax(&model.decode(&lre_apply(lre, &ex.subject())))[ex.object_token]
}

/// Fraction of examples where the LRE's decoded top token matches the model's.
pub fn faithfulness(lre: &Lre, model: &dyn RelationModel, eval: &[RelationExample]) -> f64 {
    if eval.is_empty() {
        return 0.0;
    }
    eval.iter().filter(|ex| is_faithful(lre, model, ex)).count() as f64 / eval.len() as f64
}

/// Mean log-probability of the correct object under the LRE output.
pub fn faith_prob(lre: &Lre, model: &dyn RelationModel, eval: &[RelationExample]) -> f64 {
    if eval.is_empty() {
        return 0.0;
    }
    eval.iter().map(|ex| lre_log_prob(lre, model, ex)).sum::<f64>() / eval.len() as f64
}

/// Edits with a precomputed pseudoinverse of the unscaled `W`.
pub fn causal_edit_with_pinv(
    pinv: &DMatrix<f64>,
    probe: usize,
    model: &dyn RelationModel,
    source: &RelationExample,
    target: &RelationExample,
) -> EditOutcome {
    let s_src = source.subject();
    let o_src = model.forward(&s_src, source.context_id, probe);
    let o_tgt = model.forward(&target.subject(), target.context_id, probe);
    let edited_subject = &s_src + pinv * (o_tgt - o_src);
    let scores = model.decode(&model.forward(&edited_subject, source.context_id, probe));
    EditOutcome {
        token: argmax(&scores),
        edited_subject,
        scores,
    }
}

/// Moves the source subject by `pinv_rank(W)·(o_target − o_source)` and
/// decodes the model's output at the edited subject.
pub fn causal_edit(
    lre: &Lre,
    model: &dyn RelationModel,
    source: &RelationExample,
    target: &RelationExample,
    rank: usize,
) -> Result<EditOutcome> {
    let pinv = low_rank_pinv(&lre.w, rank)?;
    Ok(causal_edit_with_pinv(&pinv, lre.probe_point, model, source, target))
}

/// All ordered `(source, target)` index pairs whose objects differ.
pub fn causal_pairs(examples: &[RelationExample]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, a) in examples.iter().enumerate() {
        for (j, b) in examples.iter().enumerate() {
            if i != j && a.object_token != b.object_token {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

fn edit_hits(
    pinv: &DMatrix<f64>,
    probe: usize,
    model: &dyn RelationModel,
    source: &RelationExample,
    target: &RelationExample,
) -> (bool, bool) {
    let out = causal_edit_with_pinv(pinv, probe, model, source, target);
    let hard = out.token == target.object_token;
    let soft = out.scores[target.object_token] > out.scores[source.object_token];
    (soft, hard)
}

/// Soft and hard edit success rates over `(source, target)` index pairs.
pub fn causality(
    lre: &Lre,
    model: &dyn RelationModel,
    examples: &[RelationExample],
    pairs: &[(usize, usize)],
    rank: usize,
) -> Result<Causality> {
    let pinv = low_rank_pinv(&lre.w, rank)?;
    Ok(causality_with_pinv(&pinv, lre.probe_point, model, examples, pairs))
}

pub fn causality_with_pinv(
    pinv: &DMatrix<f64>,
    probe: usize,
    model: &dyn RelationModel,
    examples: &[RelationExample],
    pairs: &[(usize, usize)],
) -> Causality {
    if pairs.is_empty() {
        return Causality::default();
    }
    let (mut soft, mut hard) = (0usize, 0usize);
    for &(i, j) in pairs {
        let (s, h) = edit_hits(pinv, probe, model, &examples[i], &examples[j]);
        soft += s as usize;
        hard += h as usize;
    }
    let n = pairs.len() as f64;
    Causality {
        soft: soft as f64 / n,
        hard: hard as f64 / n,
    }
}

/// Relation-level metrics; causality uses `lre.rank` over all pairs with
/// distinct objects.
pub fn evaluate(lre: &Lre, model: &dyn RelationModel, eval: &[RelationExample]) -> Result<LreMetrics> {
    if eval.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    let c = causality(lre, model, eval, &causal_pairs(eval), lre.rank)?;
    Ok(LreMetrics {
        faithfulness: faithfulness(lre, model, eval),
        faith_prob: faith_prob(lre, model, eval),
        soft_causality: c.soft,
        hard_causality: c.hard,
        n_eval: eval.len(),
    })
}

/// Per-example view: faithfulness and faith probability of that example, and
/// causality over the edits that use it as the source.
pub fn per_example_metrics(
    lre: &Lre,
    model: &dyn RelationModel,
    eval: &[RelationExample],
) -> Result<Vec<LreMetrics>> {
    let pinv = low_rank_pinv(&lre.w, lre.rank)?;
    Ok(eval
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let targets: Vec<(usize, usize)> = eval
                .iter()
                .enumerate()
                .filter(|(j, t)| *j != i && t.object_token != ex.object_token)
                .map(|(j, _)| (i, j))
                .collect();
            let c = causality_with_pinv(&pinv, lre.probe_point, model, eval, &targets);
            LreMetrics {
                faithfulness: if is_faithful(lre, model, ex) { 1.0 } else { 0.0 },
                faith_prob: lre_log_prob(lre, model, ex),
                soft_causality: c.soft,
                hard_causality: c.hard,
                n_eval: targets.len(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lre::fit::{fit_lre, JacobianMethod};
    use crate::lre::model::{make_reference_model, ContextId, ProbePoint, ReferenceModel, ReferenceSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labelled(model: &ReferenceModel, n: usize, seed: u64) -> Vec<RelationExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let v: Vec<f64> = (0..model.subject_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
                let mut ex = RelationExample {
                    subject_id: i as u32,
                    subject_vector: v,
                    context_id: (i % 5) as u32,
                    object_token: 0,
                    object_id: 0,
                    subject_surface: String::new(),
                    object_surface: String::new(),
                };
                ex.object_token = model_token(model, &ex, 0);
                ex
            })
            .collect()
    }

    /// Decodes the first coordinate of a 1-d object into three fixed tokens.
    struct Fixed {
        scores: Vec<f64>,
    }

    impl RelationModel for Fixed {
        fn subject_dim(&self) -> usize {
            1
        }
        fn object_dim(&self) -> usize {
            1
        }
        fn vocab_size(&self) -> usize {
            self.scores.len()
        }
        fn forward(&self, s: &DVector<f64>, _c: ContextId, _p: ProbePoint) -> DVector<f64> {
            s.clone()
        }
        fn decode(&self, _o: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(self.scores.clone())
        }
    }

    fn one_d(token: usize) -> RelationExample {
        RelationExample {
            subject_id: 0,
            subject_vector: vec![0.5],
            context_id: 0,
            object_token: token,
            object_id: 0,
            subject_surface: String::new(),
            object_surface: String::new(),
        }
    }

    fn lre_1d(w: f64, b: f64) -> Lre {
        Lre {
            w: DMatrix::from_element(1, 1, w),
            b: DVector::from_element(1, b),
            beta: 1.0,
            rank: 1,
            fit_example_ids: vec![],
            probe_point: 0,
        }
    }

    #[test]
    fn linear_model_is_faithful_and_causal() {
        let m = make_reference_model(&ReferenceSpec::linear(6, 6, 8, 5));
        let ex = labelled(&m, 12, 1);
        let lre = fit_lre(&m, &ex[..8], 1.0, 0, JacobianMethod::Analytic).unwrap();
        // Context shifts are averaged into b, so evaluate on one context.
        let same_ctx: Vec<_> = ex.iter().cloned().map(|mut e| { e.context_id = 0; e.object_token = model_token(&m, &e, 0); e }).collect();
        let lre_ctx = fit_lre(&m, &same_ctx[..8], 1.0, 0, JacobianMethod::Analytic).unwrap();
        assert_eq!(faithfulness(&lre_ctx, &m, &same_ctx), 1.0);
        let metrics = evaluate(&lre, &m, &ex).unwrap();
        assert_eq!(metrics.hard_causality, 1.0);
        assert_eq!(metrics.soft_causality, 1.0);
    }

    #[test]
    fn zero_w_bias_at_fixed_token_is_faithful() {
        let m = Fixed { scores: vec![0.0, 2.0, 1.0] };
        let lre = lre_1d(0.0, 1.0);
        let eval = vec![one_d(1), one_d(1)];
        assert_eq!(faithfulness(&lre, &m, &eval), 1.0);
    }

    #[test]
    fn uniform_decode_faith_prob() {
        let m = Fixed { scores: vec![0.0; 4] };
        let fp = faith_prob(&lre_1d(1.0, 0.0), &m, &[one_d(2)]);
        assert!((fp - (0.25f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn concentrated_decode_faith_prob_near_zero() {
        let m = Fixed { scores: vec![0.0, 60.0, 0.0] };
        let fp = faith_prob(&lre_1d(1.0, 0.0), &m, &[one_d(1)]);
        assert!(fp <= 0.0 && fp > -1e-20);
    }

    #[test]
    fn edit_toward_own_output_is_identity() {
        let m = make_reference_model(&ReferenceSpec::mlp(5, 5, 6, 2, 0.8));
        let ex = labelled(&m, 3, 4);
        let lre = fit_lre(&m, &ex, 1.0, 0, JacobianMethod::Analytic).unwrap();
        let mut same = ex[0].clone();
        same.subject_id = 99;
        let out = causal_edit(&lre, &m, &ex[0], &same, 5).unwrap();
        assert_eq!(out.edited_subject, ex[0].subject());
        assert_eq!(out.token, model_token(&m, &ex[0], 0));
    }

    #[test]
    fn zero_effect_edit_only_counts_coincidences() {
        // W = 0 makes the pseudoinverse vanish, so every edit is a no-op and
        // hard causality counts pairs where the target token already wins.
        let m = Fixed { scores: vec![0.0, 2.0, 1.0] };
        let lre = lre_1d(0.0, 0.0);
        let eval = vec![one_d(1), one_d(2), one_d(0)];
        let c = causality(&lre, &m, &eval, &causal_pairs(&eval), 1).unwrap();
        // Targets with token 1 are hits: (1→0) and (2→0).
        assert!((c.hard - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_rank_propagates() {
        let m = make_reference_model(&ReferenceSpec::linear(3, 3, 4, 1));
        let ex = labelled(&m, 2, 0);
        let lre = fit_lre(&m, &ex, 1.0, 0, JacobianMethod::Analytic).unwrap();
        assert!(matches!(causal_edit(&lre, &m, &ex[0], &ex[1], 4), Err(Error::Rank { .. })));
    }

    #[test]
    fn per_example_averages_to_relation_level() {
        let m = make_reference_model(&ReferenceSpec::mlp(6, 6, 5, 11, 1.2));
        let ex = labelled(&m, 10, 3);
        let lre = fit_lre(&m, &ex[..8], 1.0, 0, JacobianMethod::Analytic).unwrap();
        let rel = evaluate(&lre, &m, &ex).unwrap();
        let per = per_example_metrics(&lre, &m, &ex).unwrap();
        let mean_faith = per.iter().map(|p| p.faithfulness).sum::<f64>() / per.len() as f64;
        assert!((mean_faith - rel.faithfulness).abs() < 1e-12);
        let hard_hits: f64 = per.iter().map(|p| p.hard_causality * p.n_eval as f64).sum();
        let total: usize = per.iter().map(|p| p.n_eval).sum();
        assert!((hard_hits / total as f64 - rel.hard_causality).abs() < 1e-12);
    }
}
