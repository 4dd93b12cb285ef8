// SPDX-License-Identifier: MIT OR Apache-2.0

use freqlens::corpus::CountTable;
use freqlens::regress::{
    baselines, build_feature_table, cross_model_transfer, evaluate, fold_partition, loro_cv, loro_importance,
    pearson, read_feature_table, read_records, train_forest, within_magnitude, write_feature_table, write_records,
    ExampleRecord, FeatureRow, FeatureSet, Forest, ForestParams, LmFeatures, LreFeatures, TargetKind, TreeParams,
};
use freqlens::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_forest(n_trees: usize) -> ForestParams {
    ForestParams {
        n_trees,
        bootstrap: true,
        tree: TreeParams::default(),
    }
}

/// `n_rel` relations with disjoint objects. The target grows with hard
/// causality; the LM features are noise.
fn synthetic_rows(n_rel: usize, per_rel: usize, seed: u64) -> Vec<FeatureRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for r in 0..n_rel {
        for i in 0..per_rel {
            let hard: f64 = rng.random_range(0.0..1.0);
            let log10 = 0.5 + 4.0 * hard + rng.random_range(-0.2..0.2);
            rows.push(FeatureRow {
                relation_id: format!("r{r:02}"),
                example_id: format!("e{i:03}"),
                subject_id: (r * 100 + i) as u32,
                object_id: (10_000 + r * 10 + i % 3) as u32,
                lm: LmFeatures {
                    logprob_correct: rng.random_range(-5.0..0.0),
                    fewshot_accuracy: rng.random_range(0..=5) as f64 / 5.0,
                },
                lre: LreFeatures {
                    faithfulness: rng.random_range(0.0..1.0),
                    faith_prob: rng.random_range(-3.0..0.0),
                    soft_causality: rng.random_range(0.0..1.0),
                    hard_causality: hard,
                },
                target_ln_count: 10f64.powf(log10).ln_1p(),
                target_kind: TargetKind::SubjectObject,
            });
        }
    }
    rows
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn within_magnitude_is_a_tenfold_band(t in 1.0f64..1e6, k in -2.0f64..2.0) {
        let pred = t * 10f64.powf(k);
        let expect = k.abs() <= 1.0 - 1e-9 || (pred < 1.0 && t <= 10.0 - 1e-9);
        if (k.abs() - 1.0).abs() > 1e-9 {
            prop_assert_eq!(within_magnitude(pred, t), expect);
        }
    }

    #[test]
    fn pearson_is_affine_invariant(seed in 0u64..1000, a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
        let r = pearson(&x, &y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&r));
        let scaled: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        prop_assert!((pearson(&x, &scaled).unwrap() - r).abs() < 1e-9);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        prop_assert!((pearson(&x, &neg).unwrap() + r).abs() < 1e-9);
    }

    #[test]
    fn forest_predictions_stay_in_target_range(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..40);
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let names = vec!["a".to_string(), "b".to_string()];
        let f = train_forest(&x, &y, &names, &small_forest(8), seed).unwrap();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        for _ in 0..10 {
            let p = f.predict(&[rng.random_range(-1.0..2.0), rng.random_range(-1.0..2.0)]).unwrap();
            prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
        }
    }
}

#[test]
fn predictions_below_one_count_are_clamped() {
    assert!(within_magnitude(0.0, 5.0));
    assert!(within_magnitude(0.3, 10.0));
    assert!(!within_magnitude(0.3, 11.0));
}

#[test]
fn forest_is_seeded_and_round_trips() {
    let rows = synthetic_rows(3, 20, 1);
    let names = FeatureSet::LmAndLre.names();
    let x: Vec<Vec<f64>> = rows.iter().map(|r| r.features(&names).unwrap()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.target_ln_count).collect();
    let a = train_forest(&x, &y, &names, &small_forest(10), 4).unwrap();
    assert_eq!(a, train_forest(&x, &y, &names, &small_forest(10), 4).unwrap());
    assert_ne!(a, train_forest(&x, &y, &names, &small_forest(10), 5).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("forest.bin");
    a.save(&path).unwrap();
    let b = Forest::load(&path).unwrap();
    for q in &x {
        assert_eq!(a.predict(q).unwrap(), b.predict(q).unwrap());
    }
    assert!(matches!(a.predict(&[1.0]), Err(Error::Dimension(_))));
}

#[test]
fn folds_drop_leaked_objects() {
    let mut rows = synthetic_rows(4, 6, 2);
    // r01 shares one object with r00.
    rows[6].object_id = rows[0].object_id;
    let (train, eval) = fold_partition(&rows, "r00");
    assert!(eval.iter().all(|&i| rows[i].relation_id == "r00"));
    assert_eq!(eval.len(), 6);
    assert!(!train.contains(&6));
    assert_eq!(train.len(), 3 * 6 - 1);
}

#[test]
fn cross_validation_finds_the_planted_signal() {
    let rows = synthetic_rows(5, 30, 3);
    let seeds = [0, 1];
    let lre = loro_cv(&rows, FeatureSet::LmAndLre, &seeds, &small_forest(20)).unwrap();
    let lm = loro_cv(&rows, FeatureSet::LmOnly, &seeds, &small_forest(20)).unwrap();
    assert_eq!(lre.folds.len(), 10);
    assert!(lre.accuracy.mean > 0.9, "{:?}", lre.accuracy);
    assert!(lre.accuracy.mean > lm.accuracy.mean + 0.2);
    assert!(lre.mae_ln.mean < lm.mae_ln.mean);
    let again = loro_cv(&rows, FeatureSet::LmAndLre, &seeds, &small_forest(20)).unwrap();
    assert_eq!(again, lre);
    assert!(matches!(
        loro_cv(&rows[..30], FeatureSet::LmOnly, &seeds, &small_forest(5)),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn importance_ranks_the_planted_feature_first() {
    let rows = synthetic_rows(4, 25, 4);
    let rep = loro_importance(&rows, &[0], &small_forest(15), &["faithfulness", "faith_prob"], 3).unwrap();
    assert_eq!(rep.features[0].feature, "hard_causality");
    assert_eq!(rep.features.len(), 5);
    assert!(rep.merged.is_some());
    assert_eq!(rep.n_folds, 4);
    let plain = loro_importance(&rows, &[0], &small_forest(15), &[], 3).unwrap();
    assert_eq!(plain.features.len(), 6);
}

#[test]
fn baselines_and_transfer() {
    let b = baselines(&[2f64.ln_1p(); 4], &[2.0, 15.0, 500.0], 0).unwrap();
    assert!((b.mean - 2.0 / 3.0).abs() < 1e-12);
    assert!((b.random - 2.0 / 3.0).abs() < 1e-12);
    assert!(baselines(&[], &[1.0], 0).is_err());

    let rows = synthetic_rows(3, 20, 5);
    let names = FeatureSet::LmAndLre.names();
    let x: Vec<Vec<f64>> = rows.iter().map(|r| r.features(&names).unwrap()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.target_ln_count).collect();
    let f = train_forest(&x, &y, &names, &small_forest(10), 0).unwrap();
    let plain = evaluate(&f, &rows, &y, 0).unwrap();
    let same = cross_model_transfer(&f, &rows, &y, 1.0, "a", "b", 0).unwrap();
    assert_eq!(same.report, plain);
    let far = cross_model_transfer(&f, &rows, &y, 1e6, "a", "b", 0).unwrap();
    assert!(far.report.within_magnitude_accuracy < plain.within_magnitude_accuracy);
    assert!(cross_model_transfer(&f, &rows, &y, 0.0, "a", "b", 0).is_err());
}

fn record(rel: &str, ex: &str, s: u32, o: u32) -> ExampleRecord {
    ExampleRecord {
        relation_id: rel.into(),
        example_id: ex.into(),
        subject_id: s,
        object_id: o,
        lm: LmFeatures {
            logprob_correct: -0.25,
            fewshot_accuracy: 0.4,
        },
        lre: LreFeatures {
            faithfulness: 1.0,
            faith_prob: -0.125,
            soft_causality: 0.5,
            hard_causality: 0.75,
        },
    }
}

#[test]
fn feature_table_joins_counts() {
    let mut counts = CountTable::new();
    counts.add_occurrences(3, 100);
    counts.add_occurrences(4, 1);
    counts.add_pair(0, 3, 9);
    counts.add_pair(1, 3, 1);
    let records = vec![record("b", "e0", 0, 3), record("a", "e1", 1, 3), record("a", "e0", 2, 4)];
    let pairs = build_feature_table(&records, &counts, 5, TargetKind::SubjectObject).unwrap();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].target_ln_count, 9f64.ln_1p());
    let objects = build_feature_table(&records, &counts, 5, TargetKind::Object).unwrap();
    let ids: Vec<(&str, &str)> = objects.iter().map(|r| (r.relation_id.as_str(), r.example_id.as_str())).collect();
    assert_eq!(ids, vec![("a", "e1"), ("b", "e0")]);
    assert!(objects.iter().all(|r| r.target_ln_count == 100f64.ln_1p()));
    match build_feature_table(&[record("a", "e9", 7, 3)], &counts, 5, TargetKind::SubjectObject) {
        Err(Error::UnresolvedTerms(t)) => assert_eq!(t.len(), 1),
        other => panic!("unexpected {other:?}"),
    }

    let dir = tempfile::tempdir().unwrap();
    write_records(&dir.path().join("r.tsv"), &records).unwrap();
    assert_eq!(read_records(&dir.path().join("r.tsv")).unwrap(), records);
    write_feature_table(&dir.path().join("f.tsv"), &objects).unwrap();
    assert_eq!(read_feature_table(&dir.path().join("f.tsv")).unwrap(), objects);
}
