//! The `featurize`, `train`, `eval` and `report` steps.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::features::{load_split, FeatureCache};
use super::manifest::{Manifest, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate_by_condition, per_condition_report, write_predictions, PredictionRecord, Report, VariantResults};
use crate::model::{load_checkpoint, save_checkpoint, HtsatModel};
use crate::train::{predict_logits, train_loop, EpochRecord};

pub const CHECKPOINT_FILE: &str = "checkpoint.mmck";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const EVAL_RESULTS_FILE: &str = "eval_results.json";

pub fn manifest_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.manifest
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("no manifest configured".into()))
}

/// Configured classes, or the manifest's sorted labels when none are set.
pub fn resolve_classes(cfg: &RunConfig, manifest: &Manifest) -> Result<Vec<String>> {
    let classes = if cfg.classes.is_empty() {
        manifest.labels()
    } else {
        cfg.classes.clone()
    };
    if classes.len() != cfg.model.n_classes {
        return Err(Error::InvalidConfig(format!(
            "{} classes but model.n_classes is {}",
            classes.len(),
            cfg.model.n_classes
        )));
    }
    Ok(classes)
}

pub fn open_cache(cfg: &RunConfig, manifest: &Manifest) -> Result<FeatureCache> {
    let dir = cfg
        .cache_dir
        .clone()
        .unwrap_or_else(|| manifest.root.join("feature_cache"));
    FeatureCache::new(Some(dir))
}

fn load_manifest(cfg: &RunConfig) -> Result<(Manifest, Vec<String>)> {
    let path = manifest_path(cfg)?;
    let manifest = Manifest::load(path, &cfg.classes)?;
    let classes = resolve_classes(cfg, &manifest)?;
    Ok((manifest, classes))
}

/// Fills the feature cache for every manifest row; returns the row count.
pub fn run_featurize(cfg: &RunConfig) -> Result<usize> {
    let (manifest, _) = load_manifest(cfg)?;
    let cache = open_cache(cfg, &manifest)?;
    for row in &manifest.rows {
        cache.features(&manifest.resolve(&row.clip_path))?;
    }
    Ok(manifest.rows.len())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub epochs_run: usize,
    pub num_parameters: usize,
    pub history: Vec<EpochRecord>,
}

/// Trains on the manifest's train split (early stopping on val) and writes
/// the checkpoint, the JSON-lines log and the resolved config to `out_dir`.
pub fn run_train(cfg: &RunConfig, out_dir: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    let (manifest, classes) = load_manifest(cfg)?;
    let cache = open_cache(cfg, &manifest)?;
    let (train, _) = load_split(&manifest, Split::Train, &classes, &cache)?;
    let (val, _) = load_split(&manifest, Split::Val, &classes, &cache)?;
    fs::create_dir_all(out_dir)?;
    let model = HtsatModel::new(cfg.model.clone())?;
    let init = model.init_params(cfg.seed);
    let mut log = BufWriter::new(File::create(out_dir.join(TRAIN_LOG_FILE))?);
    let outcome = train_loop(&model, init, &train, &val, &cfg.input_spec(cfg.train_mics), &cfg.train, &mut log)?;
    log.flush()?;
    save_checkpoint(out_dir.join(CHECKPOINT_FILE), &cfg.model, &outcome.params, cfg.checkpoint_dtype)?;
    let mut resolved = cfg.clone();
    resolved.classes = classes;
    resolved.save(out_dir.join("run_config.json"))?;
    Ok(TrainSummary {
        best_epoch: outcome.best_epoch,
        best_val_acc: outcome.best_val_acc,
        epochs_run: outcome.history.len(),
        num_parameters: model.num_parameters(),
        history: outcome.history,
    })
}

/// Evaluates a checkpoint on one split with `eval_mics` channels and writes
/// predictions plus per-condition results to `out_dir`.
pub fn run_eval(cfg: &RunConfig, checkpoint: &Path, split: Split, out_dir: &Path) -> Result<VariantResults> {
    cfg.validate()?;
    let ck = load_checkpoint(checkpoint)?;
    cfg.model.check_compatible(&ck.config)?;
    let model = HtsatModel::new(ck.config.clone())?;
    model.check_params(&ck.params)?;
    let (manifest, classes) = load_manifest(cfg)?;
    let cache = open_cache(cfg, &manifest)?;
    let (examples, conditions) = load_split(&manifest, split, &classes, &cache)?;
    if examples.is_empty() {
        return Err(Error::Empty(format!("{} split is empty", split.as_str())));
    }
    if let Some(ex) = examples.iter().find(|e| e.mels.len() < cfg.eval_mics) {
        return Err(Error::InvalidArgument(format!(
            "eval_mics {} but `{}` has {} channels",
            cfg.eval_mics,
            ex.id,
            ex.mels.len()
        )));
    }
    let logits = predict_logits(&model, &ck.params, &examples, &cfg.input_spec(cfg.eval_mics))?;
    let records: Vec<PredictionRecord> = examples
        .iter()
        .zip(logits)
        .map(|(ex, l)| PredictionRecord::new(ex.id.clone(), ex.label, l))
        .collect();
    let correct: Vec<bool> = records.iter().map(|r| r.pred == r.label).collect();
    let results = evaluate_by_condition(&conditions, &correct, cfg.n_resamples, cfg.seed)?;
    let variant = VariantResults {
        variant: cfg.fusion.as_str().to_string(),
        results,
    };
    fs::create_dir_all(out_dir)?;
    let mut w = BufWriter::new(File::create(out_dir.join(PREDICTIONS_FILE))?);
    write_predictions(&mut w, &records)?;
    w.flush()?;
    fs::write(out_dir.join(EVAL_RESULTS_FILE), serde_json::to_string_pretty(&variant)? + "\n")?;
    Ok(variant)
}

/// Combines eval outputs (files or directories holding `eval_results.json`)
/// into `report.csv` and `report.txt`, one column per input in order.
pub fn run_report(inputs: &[PathBuf], out_dir: &Path) -> Result<Report> {
    if inputs.is_empty() {
        return Err(Error::Empty("report needs at least one eval output".into()));
    }
    let variants = inputs
        .iter()
        .map(|p| {
            let file = if p.is_dir() { p.join(EVAL_RESULTS_FILE) } else { p.clone() };
            Ok(serde_json::from_str::<VariantResults>(&fs::read_to_string(file)?)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = per_condition_report(&variants);
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("report.csv"), report.to_csv()?)?;
    fs::write(out_dir.join("report.txt"), report.to_text())?;
    Ok(report)
}
