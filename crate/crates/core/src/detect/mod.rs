//! Betrayal detection: per-turn feature rows, dataset collection, a
//! feedforward classifier and its cross-validated evaluation.

mod classifier;
mod cv;
mod dataset;
mod features;
mod metrics;

pub use classifier::{stratified_split, train_detector, Detector, DetectorHyper, Standardizer, TrainedDetector};
pub use cv::{baseline_eval, kfold_eval, stratified_folds, BaselineReport, CvReport, FoldResult, HyperGrid};
pub use dataset::{
    checkpoint_id, collect_dataset, header, header_hash, provenance_path, sha256_hex, Dataset, Provenance,
    RowKey, LABEL_COLUMN,
};
pub use features::{
    check_feature_config, extract_features, replay_label, FeatureRow, RunningStats, FEATURE_COUNT,
    FEATURE_NAMES, FEATURE_SCHEMA_VERSION,
};
pub use metrics::{f1_report, macro_f1, mean_stdev, F1Report};
