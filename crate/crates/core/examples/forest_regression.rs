// SPDX-License-Identifier: MIT OR Apache-2.0

//! Trains a 100-tree forest on ln(1 + count) targets, scores it with the
//! within-one-order-of-magnitude metric and transfers it to a model trained
//! on twice as many tokens.

use freqlens::regress::{
    cross_model_transfer, evaluate, sort_rows, train_forest, Dataset, FeatureRow, FeatureSet, ForestParams,
    LmFeatures, LreFeatures, TargetKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rows(n_rel: usize, seed: u64) -> Vec<FeatureRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for r in 0..n_rel {
        for e in 0..20 {
            let hard: f64 = rng.random_range(0.0..1.0);
            let count = 10f64.powf(1.0 + 4.0 * hard + rng.random_range(-0.3..0.3)).round().max(2.0);
            out.push(FeatureRow {
                relation_id: format!("r{r}"),
                example_id: format!("e{e:03}"),
                subject_id: (r * 100 + e) as u32,
                object_id: (r * 100 + 50) as u32,
                lm: LmFeatures {
                    logprob_correct: -rng.random_range(0.0..3.0),
                    fewshot_accuracy: rng.random_range(0..=5) as f64 / 5.0,
                },
                lre: LreFeatures {
                    faithfulness: rng.random_range(0.0..1.0),
                    faith_prob: -rng.random_range(0.0..2.0),
                    soft_causality: (hard + rng.random_range(-0.2..0.2)).clamp(0.0, 1.0),
                    hard_causality: hard,
                },
                target_ln_count: count.ln_1p(),
                target_kind: TargetKind::SubjectObject,
            });
        }
    }
    sort_rows(&mut out);
    out
}

fn main() -> freqlens::error::Result<()> {
    let train = rows(6, 1);
    let test = rows(2, 2);
    let names = FeatureSet::LmAndLre.names();
    let data = Dataset::from_rows(&train, &names)?;
    let forest = train_forest(&data.x, &data.y, &names, &ForestParams::default(), 42)?;
    let report = evaluate(&forest, &test, &data.y, 42)?;
    println!(
        "held-out: accuracy {:.3} mae_ln {:.3} (mean baseline {:.3}, random baseline {:.3})",
        report.within_magnitude_accuracy, report.mae_ln, report.baselines.mean, report.baselines.random
    );
    let transfer = cross_model_transfer(&forest, &test, &data.y, 2.0, "small", "large", 42)?;
    print!("{}", transfer.to_tsv());
    Ok(())
}
