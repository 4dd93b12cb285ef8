// SPDX-License-Identifier: MIT OR Apache-2.0

//! Regression from model measurements to log term frequency.

mod eval;
mod features;
mod forest;
mod importance;
mod stats;
mod tree;

pub use eval::{
    baselines, cross_model_transfer, evaluate, fold_partition, loro_cv, mae_ln, within_magnitude,
    within_magnitude_accuracy, Baselines, EvalReport, FoldReport, LoroReport, MeanStd, RelationBreakdown,
    TransferReport, TRANSFER_SCALING,
};
pub use features::{
    build_feature_table, read_feature_table, read_records, sort_rows, write_feature_table, write_records, Dataset,
    ExampleRecord, FeatureRow, FeatureSet, LmFeatures, LreFeatures, TargetKind, ALL_FEATURES, LM_FEATURES,
    LRE_FEATURES,
};
pub use forest::{ln_to_count, splitmix64, train_forest, tree_seeds, Forest, ForestParams, DEFAULT_TREES};
pub use importance::{
    loro_importance, permutation_importance, rank_importance, FeatureImportance, ImportanceReport, PcaMerge,
};
pub use stats::{mean, pearson, std_dev};
pub use tree::{Tree, TreeParams, SPLIT_TIE_EPS};
