// SPDX-License-Identifier: MIT OR Apache-2.0

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::{ContextId, ProbePoint, RelationModel};
use crate::corpus::TermId;
use crate::error::{Error, Result};

/// Default relative finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-4;
/// Examples averaged per fit unless configured otherwise.
pub const DEFAULT_FIT_EXAMPLES: usize = 8;

/// One subject-relation-object triplet with the subject's representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationExample {
    pub subject_id: TermId,
    pub subject_vector: Vec<f64>,
    pub context_id: ContextId,
    /// Vocabulary index of the correct object under the paired model.
    pub object_token: usize,
    /// Dictionary term of the object, for count lookups.
    pub object_id: TermId,
    #[serde(default)]
    pub subject_surface: String,
    #[serde(default)]
    pub object_surface: String,
}

impl RelationExample {
    pub fn subject(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.subject_vector)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JacobianMethod {
    Analytic,
    /// Central differences with per-coordinate step `h·(1 + |s_j|)`.
    CentralDifference { h: f64 },
}

impl Default for JacobianMethod {
    fn default() -> Self {
        JacobianMethod::CentralDifference { h: DEFAULT_FD_STEP }
    }
}

fn check_finite(v: &DVector<f64>, coordinate: usize, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            coordinate,
            detail: format!("forward output not finite at {what}"),
        })
    }
}

/// Jacobian of the model's forward map with respect to the subject vector.
pub fn jacobian(
    model: &dyn RelationModel,
    s: &DVector<f64>,
    context: ContextId,
    probe: ProbePoint,
    method: JacobianMethod,
) -> Result<DMatrix<f64>> {
    if s.len() != model.subject_dim() {
        return Err(Error::Dimension(format!(
            "subject has {} dims, model expects {}",
            s.len(),
            model.subject_dim()
        )));
    }
    match method {
        JacobianMethod::Analytic => model
            .analytic_jacobian(s, context, probe)
            .ok_or_else(|| Error::InvalidArgument("model has no analytic Jacobian".into())),
        JacobianMethod::CentralDifference { h } => {
            if !(h > 0.0) {
                return Err(Error::InvalidArgument(format!("finite-difference step {h} must be positive")));
            }
            let mut jac = DMatrix::zeros(model.object_dim(), s.len());
            let mut probe_s = s.clone();
            for j in 0..s.len() {
                let step = h * (1.0 + s[j].abs());
                probe_s[j] = s[j] + step;
                let plus = model.forward(&probe_s, context, probe);
                check_finite(&plus, j, "s + h·e_j")?;
                probe_s[j] = s[j] - step;
                let minus = model.forward(&probe_s, context, probe);
                check_finite(&minus, j, "s - h·e_j")?;
                probe_s[j] = s[j];
                jac.set_column(j, &((plus - minus) / (2.0 * step)));
            }
            Ok(jac)
        }
    }
}

/// Affine approximation `β·W·s + b` of one relation at one probe point.
#[derive(Debug, Clone, PartialEq)]
pub struct Lre {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Scales `W` on the application path only; edits use unscaled `W`.
    pub beta: f64,
    /// Pseudoinverse rank used for causal edits.
    pub rank: usize,
    pub fit_example_ids: Vec<TermId>,
    pub probe_point: ProbePoint,
}

impl Lre {
    pub fn full_rank(&self) -> usize {
        self.w.nrows().min(self.w.ncols())
    }

    pub fn subject_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_rank(mut self, rank: usize) -> Self {
        self.rank = rank;
        self
    }
}

/// Returns `β·W·s + b`.
pub fn lre_apply(lre: &Lre, s: &DVector<f64>) -> DVector<f64> {
    &lre.w * s * lre.beta + &lre.b
}

/// Averages per-example Jacobians into `W` and first-order offsets
/// `F(sᵢ, cᵢ) − Jᵢ·sᵢ` into `b`. Examples are used whether or not the model
/// predicts them correctly.
pub fn fit_lre(
    model: &dyn RelationModel,
    examples: &[RelationExample],
    beta: f64,
    probe: ProbePoint,
    method: JacobianMethod,
) -> Result<Lre> {
    let first = examples
        .first()
        .ok_or_else(|| Error::InvalidArgument("fit_lre needs at least one example".into()))?;
    let ds = first.subject_vector.len();
    if let Some(bad) = examples.iter().find(|e| e.subject_vector.len() != ds) {
        return Err(Error::Dimension(format!(
            "subject {} has {} dims, first example has {ds}",
            bad.subject_id,
            bad.subject_vector.len()
        )));
    }
    if ds != model.subject_dim() {
        return Err(Error::Dimension(format!(
            "examples have {ds} dims, model expects {}",
            model.subject_dim()
        )));
    }

    let d_o = model.object_dim();
    let mut w = DMatrix::zeros(d_o, ds);
    let mut b = DVector::zeros(d_o);
    for ex in examples {
        let s = ex.subject();
        let jac = jacobian(model, &s, ex.context_id, probe, method)?;
        let out = model.forward(&s, ex.context_id, probe);
        b += out - &jac * &s;
        w += jac;
    }
    let n = examples.len() as f64;
    w /= n;
    b /= n;
    Ok(Lre {
        rank: d_o.min(ds),
        w,
        b,
        beta,
        fit_example_ids: examples.iter().map(|e| e.subject_id).collect(),
        probe_point: probe,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lre::model::{make_reference_model, ReferenceSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn examples(n: usize, dim: usize, seed: u64) -> Vec<RelationExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| RelationExample {
                subject_id: i as TermId,
                subject_vector: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                context_id: (i % 5) as u32,
                object_token: 0,
                object_id: 0,
                subject_surface: String::new(),
                object_surface: String::new(),
            })
            .collect()
    }

    struct Constant;

    impl RelationModel for Constant {
        fn subject_dim(&self) -> usize {
            3
        }
        fn object_dim(&self) -> usize {
            2
        }
        fn vocab_size(&self) -> usize {
            2
        }
        fn forward(&self, _s: &DVector<f64>, _c: ContextId, _p: ProbePoint) -> DVector<f64> {
            DVector::from_vec(vec![1.0, -1.0])
        }
        fn decode(&self, o: &DVector<f64>) -> DVector<f64> {
            o.clone()
        }
    }

    struct Exploding;

    impl RelationModel for Exploding {
        fn subject_dim(&self) -> usize {
            2
        }
        fn object_dim(&self) -> usize {
            1
        }
        fn vocab_size(&self) -> usize {
            1
        }
        fn forward(&self, s: &DVector<f64>, _c: ContextId, _p: ProbePoint) -> DVector<f64> {
            DVector::from_element(1, if s[1] > 0.5 { f64::NAN } else { s[0] })
        }
        fn decode(&self, o: &DVector<f64>) -> DVector<f64> {
            o.clone()
        }
    }

    #[test]
    fn affine_jacobian_exact_and_fd_close() {
        let m = make_reference_model(&ReferenceSpec::linear(6, 4, 5, 7));
        let s = DVector::from_element(6, 0.7);
        let (a, _) = m.affine_part();
        assert_eq!(jacobian(&m, &s, 0, 0, JacobianMethod::Analytic).unwrap(), *a);
        let fd = jacobian(&m, &s, 0, 0, JacobianMethod::CentralDifference { h: 1e-4 }).unwrap();
        assert!((fd - a).abs().max() < 1e-6);
    }

    #[test]
    fn constant_model_has_zero_jacobian() {
        let s = DVector::from_element(3, 2.0);
        let j = jacobian(&Constant, &s, 0, 0, JacobianMethod::default()).unwrap();
        assert_eq!(j, DMatrix::zeros(2, 3));
        assert!(jacobian(&Constant, &s, 0, 0, JacobianMethod::Analytic).is_err());
    }

    #[test]
    fn non_finite_output_names_coordinate() {
        let s = DVector::from_vec(vec![0.0, 0.5]);
        match jacobian(&Exploding, &s, 0, 0, JacobianMethod::default()) {
            Err(Error::NonFinite { coordinate, .. }) => assert_eq!(coordinate, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn linear_fit_recovers_affine_map() {
        let m = make_reference_model(&ReferenceSpec::linear(5, 5, 6, 2));
        let ex = examples(8, 5, 1);
        let lre = fit_lre(&m, &ex, 1.0, 0, JacobianMethod::Analytic).unwrap();
        let (a, k) = m.affine_part();
        assert!((&lre.w - a).abs().max() < 1e-12);
        assert!((&lre.b - k).abs().max() < 1e-12);
        assert_eq!(lre.rank, 5);
        assert_eq!(lre.fit_example_ids, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn single_example_fit() {
        let m = make_reference_model(&ReferenceSpec::mlp(4, 3, 5, 8, 1.0));
        let ex = examples(1, 4, 5);
        let lre = fit_lre(&m, &ex, 1.0, 0, JacobianMethod::Analytic).unwrap();
        let s = ex[0].subject();
        let jac = m.analytic_jacobian(&s, ex[0].context_id, 0).unwrap();
        assert_eq!(lre.w, jac);
        let expected_b = m.forward(&s, ex[0].context_id, 0) - &jac * &s;
        assert!((lre.b - expected_b).abs().max() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let m = make_reference_model(&ReferenceSpec::linear(4, 3, 5, 1));
        let mut ex = examples(3, 4, 5);
        ex[2].subject_vector.push(0.0);
        assert!(matches!(fit_lre(&m, &ex, 1.0, 0, JacobianMethod::Analytic), Err(Error::Dimension(_))));
        assert!(fit_lre(&m, &[], 1.0, 0, JacobianMethod::Analytic).is_err());
    }

    #[test]
    fn apply_with_zero_beta_is_bias() {
        let m = make_reference_model(&ReferenceSpec::linear(3, 3, 3, 4));
        let lre = fit_lre(&m, &examples(2, 3, 0), 0.0, 0, JacobianMethod::Analytic).unwrap();
        let s = DVector::from_vec(vec![9.0, -4.0, 1.0]);
        assert_eq!(lre_apply(&lre, &s), lre.b);
    }
}
