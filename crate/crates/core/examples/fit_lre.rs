// SPDX-License-Identifier: MIT OR Apache-2.0

//! Fits a linear relational embedding to an affine reference model and to
//! an MLP with a nonlinear branch, and compares their metrics.

use freqlens::lre::{
    argmax, evaluate, fit_lre, make_reference_model, JacobianMethod, ReferenceSpec, RelationExample, RelationModel,
};
use nalgebra::DVector;

fn examples(model: &dyn RelationModel, n: usize) -> Vec<RelationExample> {
    (0..n)
        .map(|i| {
            let s: Vec<f64> = (0..model.subject_dim()).map(|j| ((i * 7 + j * 3) as f64 * 0.61).sin() * 2.0).collect();
            let ctx = (i % 5) as u32;
            let token = argmax(&model.decode(&model.forward(&DVector::from_vec(s.clone()), ctx, 0)));
            RelationExample {
                subject_id: i as u32,
                subject_vector: s,
                context_id: ctx,
                object_token: token,
                object_id: 1000 + token as u32,
                subject_surface: format!("s{i}"),
                object_surface: format!("o{token}"),
            }
        })
        .collect()
}

fn main() -> freqlens::error::Result<()> {
    for spec in [ReferenceSpec::linear(6, 6, 4, 1), ReferenceSpec::mlp(6, 6, 4, 1, 2.0)] {
        let model = make_reference_model(&spec);
        let data = examples(&model, 30);
        let lre = fit_lre(&model, &data[..8], 1.0, 0, JacobianMethod::Analytic)?;
        let m = evaluate(&lre, &model, &data)?;
        println!(
            "{:?}: faithfulness {:.3} faith_prob {:.3} hard_causality {:.3} soft_causality {:.3}",
            spec.kind, m.faithfulness, m.faith_prob, m.hard_causality, m.soft_causality
        );
    }
    Ok(())
}
