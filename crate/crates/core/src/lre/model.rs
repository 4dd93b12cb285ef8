// SPDX-License-Identifier: MIT OR Apache-2.0

//! Relation-model interface and the deterministic reference models that stand
//! in for a transformer at desk scale.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Stand-in for the layer at which subject states are read and edited.
pub type ProbePoint = usize;
/// Opaque few-shot context identifier.
pub type ContextId = u32;

/// The computation from a subject representation to an object representation
/// for one relation, plus a decoder to token scores.
pub trait RelationModel: Send + Sync {
    fn subject_dim(&self) -> usize;
    fn object_dim(&self) -> usize;
    fn vocab_size(&self) -> usize;

    fn probe_points(&self) -> Vec<ProbePoint> {
        vec![0]
    }

    /// Deterministic in `(s, context, probe)`.
    fn forward(&self, s: &DVector<f64>, context: ContextId, probe: ProbePoint) -> DVector<f64>;

    /// Finite score per vocabulary token.
    fn decode(&self, o: &DVector<f64>) -> DVector<f64>;

    fn analytic_jacobian(&self, _s: &DVector<f64>, _context: ContextId, _probe: ProbePoint) -> Option<DMatrix<f64>> {
        None
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &DVector<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

/// Log of the exponentiate-and-normalize distribution over scores.
pub fn log_softmax(scores: &DVector<f64>) -> DVector<f64> {
    let max = scores.max();
    let lse = max + scores.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    scores.map(|v| v - lse)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    Linear,
    Mlp,
}

/// Parameters from which a reference model is rebuilt bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub kind: ReferenceKind,
    pub subject_dim: usize,
    pub object_dim: usize,
    pub vocab_size: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_contexts")]
    pub n_contexts: usize,
    pub seed: u64,
    /// Weight of the nonlinear branch at each probe point; a single value
    /// gives a single probe point. Ignored by the linear kind.
    #[serde(default)]
    pub noise: Vec<f64>,
}

fn default_hidden() -> usize {
    16
}

fn default_contexts() -> usize {
    5
}

impl ReferenceSpec {
    pub fn linear(subject_dim: usize, object_dim: usize, vocab_size: usize, seed: u64) -> Self {
        ReferenceSpec {
            kind: ReferenceKind::Linear,
            subject_dim,
            object_dim,
            vocab_size,
            hidden_dim: default_hidden(),
            n_contexts: default_contexts(),
            seed,
            noise: vec![],
        }
    }

    pub fn mlp(subject_dim: usize, object_dim: usize, vocab_size: usize, seed: u64, noise: f64) -> Self {
        ReferenceSpec {
            kind: ReferenceKind::Mlp,
            noise: vec![noise],
            ..Self::linear(subject_dim, object_dim, vocab_size, seed)
        }
    }
}

/// Affine map `A·s + k` plus, for the MLP kind, a residual branch
/// `noise[p]·U·tanh(V₂·tanh(V₁·s + c₁ + shift[c]) + c₂)`, with a linear decode
/// head. Context only enters through the nonlinear branch, so a zero-noise
/// probe point is exactly affine.
#[derive(Debug, Clone)]
pub struct ReferenceModel {
    spec: ReferenceSpec,
    a: DMatrix<f64>,
    k: DVector<f64>,
    shifts: Vec<DVector<f64>>,
    head: DMatrix<f64>,
    v1: DMatrix<f64>,
    c1: DVector<f64>,
    v2: DMatrix<f64>,
    c2: DVector<f64>,
    u: DMatrix<f64>,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps parameter streams stable across rand_distr versions.
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| gaussian(rng) * scale)
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| gaussian(rng) * scale)
}

/// Builds a reference model; identical specs give identical parameters.
pub fn make_reference_model(spec: &ReferenceSpec) -> ReferenceModel {
    assert!(
        spec.subject_dim > 0 && spec.object_dim > 0 && spec.vocab_size > 0,
        "reference model dimensions must be positive"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (ds, d_o, h) = (spec.subject_dim, spec.object_dim, spec.hidden_dim.max(1));
    let a = gaussian_matrix(&mut rng, d_o, ds, 1.0 / (ds as f64).sqrt());
    let k = gaussian_vector(&mut rng, d_o, 0.1);
    let shifts = (0..spec.n_contexts.max(1))
        .map(|_| gaussian_vector(&mut rng, h, 0.5))
        .collect();
    let head = gaussian_matrix(&mut rng, spec.vocab_size, d_o, 1.0);
    let v1 = gaussian_matrix(&mut rng, h, ds, 1.5 / (ds as f64).sqrt());
    let c1 = gaussian_vector(&mut rng, h, 0.5);
    let v2 = gaussian_matrix(&mut rng, h, h, 1.5 / (h as f64).sqrt());
    let c2 = gaussian_vector(&mut rng, h, 0.5);
    let u = gaussian_matrix(&mut rng, d_o, h, 1.0 / (h as f64).sqrt());
    ReferenceModel {
        spec: spec.clone(),
        a,
        k,
        shifts,
        head,
        v1,
        c1,
        v2,
        c2,
        u,
    }
}

impl ReferenceModel {
    pub fn spec(&self) -> &ReferenceSpec {
        &self.spec
    }

    /// The affine part `(A, k)`.
    pub fn affine_part(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.a, &self.k)
    }

    pub fn head(&self) -> &DMatrix<f64> {
        &self.head
    }

    pub fn context_shift(&self, context: ContextId) -> &DVector<f64> {
        &self.shifts[context as usize % self.shifts.len()]
    }

    /// Replaces the per-probe-point weights of the nonlinear branch.
    pub fn with_probe_noise(mut self, noise: Vec<f64>) -> Self {
        self.spec.noise = noise;
        self
    }

    fn noise(&self, probe: ProbePoint) -> f64 {
        match self.spec.kind {
            ReferenceKind::Linear => 0.0,
            ReferenceKind::Mlp => self.spec.noise.get(probe).copied().unwrap_or(0.0),
        }
    }

    fn hidden(&self, s: &DVector<f64>, context: ContextId) -> (DVector<f64>, DVector<f64>) {
        let h1 = (&self.v1 * s + &self.c1 + self.context_shift(context)).map(f64::tanh);
        let h2 = (&self.v2 * &h1 + &self.c2).map(f64::tanh);
        (h1, h2)
    }
}

impl RelationModel for ReferenceModel {
    fn subject_dim(&self) -> usize {
        self.spec.subject_dim
    }

    fn object_dim(&self) -> usize {
        self.spec.object_dim
    }

    fn vocab_size(&self) -> usize {
        self.spec.vocab_size
    }

    fn probe_points(&self) -> Vec<ProbePoint> {
        match self.spec.kind {
            ReferenceKind::Linear => vec![0],
            ReferenceKind::Mlp => (0..self.spec.noise.len().max(1)).collect(),
        }
    }

    fn forward(&self, s: &DVector<f64>, context: ContextId, probe: ProbePoint) -> DVector<f64> {
        let mut out = &self.a * s + &self.k;
        let noise = self.noise(probe);
        if noise != 0.0 {
            let (_, h2) = self.hidden(s, context);
            out += &self.u * h2 * noise;
        }
        out
    }

    fn decode(&self, o: &DVector<f64>) -> DVector<f64> {
        &self.head * o
    }

    fn analytic_jacobian(&self, s: &DVector<f64>, context: ContextId, probe: ProbePoint) -> Option<DMatrix<f64>> {
        let noise = self.noise(probe);
        if noise == 0.0 {
            return Some(self.a.clone());
        }
        let (h1, h2) = self.hidden(s, context);
        let d1 = DMatrix::from_diagonal(&h1.map(|x| 1.0 - x * x));
        let d2 = DMatrix::from_diagonal(&h2.map(|x| 1.0 - x * x));
        Some(&self.a + &self.u * d2 * &self.v2 * d1 * &self.v1 * noise)
    }
}
