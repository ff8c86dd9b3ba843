//! Mini-batch Adam training with linear warm-up and early stopping on
//! validation accuracy.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{spec_augment, MaskSpec};
use crate::dsp::MelSpectrogram;
use crate::error::{Error, Result};
use crate::eval::argmax;
use crate::fusion::{model_inputs, FusionMode, MelImage, DEFAULT_SEGMENTS};
use crate::grad::{lr_schedule, Adam, AdamConfig, Gradients, ParamStore, Tape};
use crate::model::HtsatModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Warm-up length in optimizer steps; `None` means 5% of all steps.
    pub warmup_steps: Option<usize>,
    pub seed: u64,
    pub adam: AdamConfig,
    pub augment: MaskSpec,
    /// Record elapsed time in the log; off gives byte-reproducible logs.
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 16,
            max_epochs: 150,
            patience: 25,
            warmup_steps: None,
            seed: 0,
            adam: AdamConfig::default(),
            augment: MaskSpec::default(),
            log_wall_time: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::InvalidConfig(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidConfig("batch_size and max_epochs must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::InvalidConfig(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }

    pub fn warmup_for(&self, total_steps: usize) -> usize {
        self.warmup_steps.unwrap_or(total_steps / 20)
    }
}

/// How per-channel features become model inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub mode: FusionMode,
    /// Mel image segments; the image side is `64·segments`.
    pub segments: usize,
    /// Use only the first `channels` channels when set.
    pub channels: Option<usize>,
}

impl Default for InputSpec {
    fn default() -> Self {
        Self {
            mode: FusionMode::Single,
            segments: DEFAULT_SEGMENTS,
            channels: None,
        }
    }
}

impl InputSpec {
    fn select<'a>(&self, mels: &'a [MelSpectrogram]) -> Result<&'a [MelSpectrogram]> {
        match self.channels {
            Some(m) if m == 0 || m > mels.len() => Err(Error::InvalidArgument(format!(
                "{m} channels requested, example has {}",
                mels.len()
            ))),
            Some(m) => Ok(&mels[..m]),
            None => Ok(mels),
        }
    }

    /// Model inputs without augmentation.
    pub fn images(&self, mels: &[MelSpectrogram]) -> Result<Vec<MelImage>> {
        model_inputs(self.select(mels)?, self.mode, self.segments)
    }
}

/// One labelled clip as per-channel log-mel spectrograms.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    pub mels: Vec<MelSpectrogram>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub lr: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamStore,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub history: Vec<EpochRecord>,
}

/// Stops after `patience` consecutive epochs without a strict improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    since_best: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            since_best: 0,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn observe(&mut self, metric: f64) -> StopDecision {
        let improved = self.best.is_none_or(|b| metric > b);
        if improved {
            self.best = Some(metric);
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        StopDecision {
            improved,
            stop: self.since_best >= self.patience && self.patience > 0,
        }
    }
}

/// Per-example RNG for augmentation and dropout.
pub fn example_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

/// Loss and parameter gradients of one example.
pub fn example_gradients(
    model: &HtsatModel,
    params: &ParamStore,
    images: &[MelImage],
    label: usize,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Gradients)> {
    let n_classes = model.config().n_classes;
    if label >= n_classes {
        return Err(Error::LabelOutOfRange { label, n_classes });
    }
    let mut tape = Tape::new(params);
    let out = model.forward(&mut tape, images, rng)?;
    let loss = tape.cross_entropy(out.logits, label)?;
    let value = tape.value(loss).data()[0];
    Ok((value, tape.backward(loss)?))
}

/// One optimizer update on the mean loss of `batch`; returns that mean.
pub fn train_step(
    model: &HtsatModel,
    params: &mut ParamStore,
    adam: &mut Adam,
    batch: &[(Vec<MelImage>, usize)],
    lr: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    params.zero_grad();
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for (images, label) in batch {
        let (loss, grads) = example_gradients(model, params, images, *label, None)?;
        params.accumulate(&grads, scale);
        total += loss;
    }
    adam.step(params, lr);
    Ok(total * scale)
}

/// Inference logits for every example.
pub fn predict_logits(
    model: &HtsatModel,
    params: &ParamStore,
    examples: &[Example],
    input: &InputSpec,
) -> Result<Vec<Vec<f64>>> {
    examples
        .iter()
        .map(|ex| model.predict(params, &input.images(&ex.mels)?))
        .collect()
}

fn accuracy_of(model: &HtsatModel, params: &ParamStore, images: &[(Vec<MelImage>, usize)]) -> Result<f64> {
    let mut correct = 0;
    for (img, label) in images {
        if argmax(&model.predict(params, img)?) == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / images.len() as f64)
}

/// Trains from `init` and returns the parameters of the epoch with the best
/// validation accuracy (earliest on ties). One JSON line per epoch goes to
/// `log`.
pub fn train_loop(
    model: &HtsatModel,
    init: ParamStore,
    train: &[Example],
    val: &[Example],
    input: &InputSpec,
    cfg: &TrainConfig,
    log: &mut dyn Write,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.check_params(&init)?;
    if train.is_empty() {
        return Err(Error::Empty("training split is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation split is empty".into()));
    }
    let val_images: Vec<(Vec<MelImage>, usize)> = val
        .iter()
        .map(|ex| Ok((input.images(&ex.mels)?, ex.label)))
        .collect::<Result<_>>()?;

    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let warmup = cfg.warmup_for(steps_per_epoch * cfg.max_epochs);
    let mut params = init;
    let mut adam = Adam::new(&params, cfg.adam);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let start = Instant::now();

    for epoch in 1..=cfg.max_epochs {
        let mut shuffle_rng = example_rng(cfg.seed, epoch, u32::MAX as usize);
        order.sort_unstable();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            params.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &train[i];
                let mut rng = example_rng(cfg.seed, epoch, i);
                let (mels, _) = spec_augment(input.select(&ex.mels)?, &cfg.augment, &mut rng)?;
                let images = model_inputs(&mels, input.mode, input.segments)?;
                let (loss, grads) = example_gradients(model, &params, &images, ex.label, Some(&mut rng))?;
                params.accumulate(&grads, scale);
                loss_sum += loss;
            }
            step += 1;
            lr = cfg.lr * lr_schedule(step, warmup);
            adam.step(&mut params, lr);
        }
        let val_acc = accuracy_of(model, &params, &val_images)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_acc,
            lr,
            wall_ms: if cfg.log_wall_time { start.elapsed().as_millis() as u64 } else { 0 },
        };
        serde_json::to_writer(&mut *log, &record)?;
        writeln!(log)?;
        log::info!(
            "epoch {epoch}: train_loss {:.4} val_acc {:.4} lr {:.2e}",
            record.train_loss,
            val_acc,
            lr
        );
        history.push(record);
        let decision = stopper.observe(val_acc);
        if decision.improved {
            best = params.clone();
            best_epoch = epoch;
        }
        if decision.stop {
            break;
        }
    }
    Ok(TrainOutcome {
        params: best,
        best_epoch,
        best_val_acc: stopper.best().unwrap_or(0.0),
        history,
    })
}
