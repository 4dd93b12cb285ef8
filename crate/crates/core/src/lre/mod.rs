// SPDX-License-Identifier: MIT OR Apache-2.0

//! Linear relational embeddings: an affine map `β·W·s + b` fitted from the
//! mean Jacobian of a relation model over a handful of examples, evaluated
//! by faithfulness and by causal edits through a rank-truncated
//! pseudoinverse of `W`.

mod fit;
mod io;
mod linalg;
mod metrics;
mod model;
mod sweep;

pub use fit::{
    fit_lre, jacobian, lre_apply, JacobianMethod, Lre, RelationExample, DEFAULT_FD_STEP, DEFAULT_FIT_EXAMPLES,
};
pub use io::{load_lre, read_metrics, save_lre, write_metrics, RelationData, RelationMetricsRow};
pub use linalg::{low_rank_pinv, svd, Svd, SINGULAR_CUTOFF};
pub use metrics::{
    causal_edit, causal_edit_with_pinv, causal_pairs, causality, causality_with_pinv, evaluate, faith_prob,
    faithfulness, per_example_metrics, Causality, EditOutcome, LreMetrics, SOFT_CAUSALITY_CONVENTION,
};
pub use model::{
    argmax, log_softmax, make_reference_model, ContextId, ProbePoint, ReferenceKind, ReferenceModel,
    ReferenceSpec, RelationModel,
};
pub use sweep::{default_beta_grid, rank_schedule, sweep_hyperparams, SweepBest, SweepPoint, SweepResult};
