// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sweeps β, edit rank and probe point for a model whose second probe point
//! is exactly affine.

use freqlens::lre::{
    argmax, default_beta_grid, make_reference_model, rank_schedule, sweep_hyperparams, JacobianMethod, ReferenceSpec,
    RelationExample, RelationModel,
};
use nalgebra::DVector;

fn main() -> freqlens::error::Result<()> {
    let mut spec = ReferenceSpec::mlp(8, 8, 5, 3, 0.0);
    spec.noise = vec![2.5, 0.0, 1.5];
    let model = make_reference_model(&spec);
    let data: Vec<RelationExample> = (0..40)
        .map(|i| {
            let s: Vec<f64> = (0..8).map(|j| ((i * 5 + j * 11) as f64 * 0.37).cos() * 2.0).collect();
            let ctx = (i % 5) as u32;
            let token = argmax(&model.decode(&model.forward(&DVector::from_vec(s.clone()), ctx, 1)));
            RelationExample {
                subject_id: i as u32,
                subject_vector: s,
                context_id: ctx,
                object_token: token,
                object_id: 100 + token as u32,
                subject_surface: format!("s{i}"),
                object_surface: format!("o{token}"),
            }
        })
        .collect();
    let sweep = sweep_hyperparams(
        &model,
        &data[..8],
        &data,
        &default_beta_grid(),
        &rank_schedule(8),
        &model.probe_points(),
        JacobianMethod::Analytic,
    )?;
    let b = &sweep.best;
    println!(
        "best probe point {} beta {} rank {}: faithfulness {:.3} hard_causality {:.3}",
        b.probe_point, b.beta, b.rank, b.faithfulness, b.hard_causality
    );
    for p in sweep.causality_surface.iter().filter(|p| p.setting == 8.0) {
        println!("  probe {} full-rank hard causality {:.3}", p.probe_point, p.value);
    }
    Ok(())
}
