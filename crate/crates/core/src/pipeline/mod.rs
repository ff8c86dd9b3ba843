//! End-to-end corpus, simulation, training and evaluation steps.

mod commands;
mod config;
mod features;
mod manifest;
mod simulate;
mod toy;

pub use commands::{
    manifest_path, open_cache, resolve_classes, run_eval, run_featurize, run_report, run_train, TrainSummary,
    CHECKPOINT_FILE, EVAL_RESULTS_FILE, PREDICTIONS_FILE, TRAIN_LOG_FILE,
};
pub use config::RunConfig;
pub use features::{load_split, FeatureCache, FEATURE_VERSION};
pub use manifest::{Manifest, ManifestRow, Split};
pub use simulate::{simulate_corpus, simulate_scene, t60_bucket, SceneRecord};
pub use toy::{
    generate_toy_corpus, split_sizes, toy_am_rate, toy_clean, toy_clip, toy_class_name, toy_f0, ToySpec,
};
