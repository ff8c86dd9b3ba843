use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::MaskSpec;
use crate::error::{Error, Result};
use crate::eval::DEFAULT_RESAMPLES;
use crate::fusion::{FusionMode, DEFAULT_SEGMENTS};
use crate::io::Dtype;
use crate::model::ModelConfig;
use crate::train::{InputSpec, TrainConfig};

/// One JSON document describing a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Class names; label indices follow this order.
    pub classes: Vec<String>,
    pub fusion: FusionMode,
    pub train_mics: usize,
    pub eval_mics: usize,
    /// Mel image segments; the model's `image_size` must be `64·segments`.
    pub segments: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub t60_range: [f64; 2],
    /// Simulated scenes per source clip.
    pub scenes_per_clip: usize,
    /// Draw scenes from a fixed pool of this many rooms instead of sampling
    /// a new room for every clip.
    pub scene_pool: Option<usize>,
    pub max_scene_retries: usize,
    pub seed: u64,
    pub n_resamples: usize,
    pub checkpoint_dtype: Dtype,
    /// Corpus manifest consumed by `simulate`, `train` and `eval`.
    pub manifest: Option<PathBuf>,
    /// Feature cache directory; defaults to `feature_cache` next to the
    /// manifest.
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            classes: Vec::new(),
            fusion: FusionMode::Single,
            train_mics: 3,
            eval_mics: 3,
            segments: DEFAULT_SEGMENTS,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            t60_range: [0.2, 0.8],
            scenes_per_clip: 6,
            scene_pool: None,
            max_scene_retries: 20,
            seed: 0,
            n_resamples: DEFAULT_RESAMPLES,
            checkpoint_dtype: Dtype::F64,
            manifest: None,
            cache_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// Sets the run seed and the training seed together.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        self.model.validate()?;
        self.train.validate()?;
        if !self.classes.is_empty() && self.classes.len() != self.model.n_classes {
            return bad(format!(
                "{} classes configured but model.n_classes is {}",
                self.classes.len(),
                self.model.n_classes
            ));
        }
        if self.train_mics == 0 || self.eval_mics == 0 {
            return bad("train_mics and eval_mics must be at least 1".into());
        }
        if self.segments == 0 || self.model.image_size != 64 * self.segments {
            return bad(format!(
                "model.image_size {} does not match {} mel segments",
                self.model.image_size, self.segments
            ));
        }
        let [lo, hi] = self.t60_range;
        if !(0.2..=0.8).contains(&lo) || !(lo..=0.8).contains(&hi) {
            return bad(format!("t60_range {:?} must lie within [0.2, 0.8]", self.t60_range));
        }
        if self.scenes_per_clip == 0 || self.scene_pool == Some(0) {
            return bad("scenes_per_clip and scene_pool must be positive".into());
        }
        Ok(())
    }

    pub fn input_spec(&self, channels: usize) -> InputSpec {
        InputSpec {
            mode: self.fusion,
            segments: self.segments,
            channels: Some(channels),
        }
    }

    pub fn mask(&self) -> &MaskSpec {
        &self.train.augment
    }
}
