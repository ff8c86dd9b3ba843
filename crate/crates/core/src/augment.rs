//! SpecAugment-style masking. Mask rectangles are drawn once per example
//! and applied at the same coordinates to every channel.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::MelSpectrogram;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskFill {
    /// Mean of the spectrogram being masked, taken before masking.
    Mean,
    Value(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskSpec {
    pub n_time_masks: usize,
    pub max_time_width: usize,
    pub n_freq_masks: usize,
    pub max_freq_width: usize,
    pub fill: MaskFill,
}

impl Default for MaskSpec {
    fn default() -> Self {
        Self {
            n_time_masks: 2,
            max_time_width: 32,
            n_freq_masks: 2,
            max_freq_width: 8,
            fill: MaskFill::Mean,
        }
    }
}

impl MaskSpec {
    pub fn none() -> Self {
        Self {
            n_time_masks: 0,
            max_time_width: 0,
            n_freq_masks: 0,
            max_freq_width: 0,
            fill: MaskFill::Mean,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskAxis {
    Time,
    Freq,
}

/// A stripe `[start, start + width)` along one axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskRect {
    pub axis: MaskAxis,
    pub start: usize,
    pub width: usize,
}

impl MaskRect {
    pub fn covers(&self, frame: usize, mel: usize) -> bool {
        let i = match self.axis {
            MaskAxis::Time => frame,
            MaskAxis::Freq => mel,
        };
        i >= self.start && i < self.start + self.width
    }
}

pub fn draw_masks(spec: &MaskSpec, frames: usize, n_mels: usize, rng: &mut impl Rng) -> Vec<MaskRect> {
    let mut out = Vec::with_capacity(spec.n_time_masks + spec.n_freq_masks);
    let mut draw = |axis, count: usize, max_w: usize, size: usize| {
        for _ in 0..count {
            let width = rng.gen_range(0..=max_w.min(size));
            let start = rng.gen_range(0..=size - width);
            out.push(MaskRect { axis, start, width });
        }
    };
    draw(MaskAxis::Time, spec.n_time_masks, spec.max_time_width, frames);
    draw(MaskAxis::Freq, spec.n_freq_masks, spec.max_freq_width, n_mels);
    out
}

pub fn apply_masks(mel: &mut MelSpectrogram, masks: &[MaskRect], fill: MaskFill) {
    let value = match fill {
        MaskFill::Mean => mel.mean(),
        MaskFill::Value(v) => v,
    };
    let (frames, n_mels) = (mel.frames(), mel.n_mels());
    let values = mel.values_mut();
    for m in masks {
        match m.axis {
            MaskAxis::Time => values[m.start * n_mels..(m.start + m.width) * n_mels].fill(value),
            MaskAxis::Freq => {
                for t in 0..frames {
                    values[t * n_mels + m.start..t * n_mels + m.start + m.width].fill(value);
                }
            }
        }
    }
}

/// Masks every channel with one shared draw; returns the masked copies and
/// the rectangles used.
pub fn spec_augment(
    mels: &[MelSpectrogram],
    spec: &MaskSpec,
    rng: &mut impl Rng,
) -> Result<(Vec<MelSpectrogram>, Vec<MaskRect>)> {
    let Some(first) = mels.first() else {
        return Ok((Vec::new(), Vec::new()));
    };
    if mels.iter().any(|m| m.frames() != first.frames()) {
        return Err(Error::ShapeMismatch("channels differ in frame count".into()));
    }
    let masks = draw_masks(spec, first.frames(), first.n_mels(), rng);
    let out = mels
        .iter()
        .map(|m| {
            let mut m = m.clone();
            apply_masks(&mut m, &masks, spec.fill);
            m
        })
        .collect();
    Ok((out, masks))
}
