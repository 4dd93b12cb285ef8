// SPDX-License-Identifier: MIT OR Apache-2.0

//! Config-driven experiment runs with digest-keyed stage caching.

mod config;
mod measure;
mod planted;
mod report;
mod run;

pub use config::{
    CorpusConfig, Experiment, ExperimentConfig, JacobianKind, LreConfig, RegressConfig, CONFIG_VERSION,
};
pub use measure::{
    example_id, fit_relation, lm_features, measure_relation, measure_with_lre, relation_model, RelationMeasurement,
};
pub use planted::{plant_experiment, write_planted, PlantedExperiment, PlantedSpec, PLANTED_CONFIG};
pub use report::{report, LoroSummary, RegressSummary, REPORT_DIR};
pub use run::{run, sha256_file, RunManifest, StageRecord, StageStatus, LOCK_FILE, MANIFEST, STAGES};
