//! Multi-channel front ends: mel image assembly, mel averaging, and the
//! input lists consumed by the model's patch embedding.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dsp::{MelSpectrogram, N_MELS};
use crate::error::{Error, Result};

/// Number of time segments stacked along frequency in the full-size image.
pub const DEFAULT_SEGMENTS: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// First channel only.
    #[default]
    Single,
    AvgMel,
    SumPe,
}

impl FusionMode {
    pub const ALL: [FusionMode; 3] = [FusionMode::Single, FusionMode::AvgMel, FusionMode::SumPe];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Single => "single",
            FusionMode::AvgMel => "avg_mel",
            FusionMode::SumPe => "sum_pe",
        }
    }
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown fusion mode `{s}`")))
    }
}

/// Square single-channel image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MelImage {
    side: usize,
    values: Vec<f64>,
}

impl MelImage {
    pub fn new(side: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != side * side {
            return Err(Error::ShapeMismatch(format!("{} values for a {side}x{side} image", values.len())));
        }
        Ok(Self { side, values })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.side + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Frames consumed by an image of `segments` segments: `64·segments²`.
pub fn image_frames(segments: usize) -> usize {
    N_MELS * segments * segments
}

/// 256×256 image from 1024 frames (4 segments).
pub fn to_mel_image(mel: &MelSpectrogram) -> MelImage {
    to_mel_image_with(mel, DEFAULT_SEGMENTS)
}

/// Crops or zero-pads time to `64·segments²` frames and stacks the
/// `segments` consecutive time blocks side by side along frequency:
/// pixel `(r, 64s + m)` holds frame `s·side + r`, mel `m`.
pub fn to_mel_image_with(mel: &MelSpectrogram, segments: usize) -> MelImage {
    let side = N_MELS * segments;
    let mut values = vec![0.0; side * side];
    for s in 0..segments {
        for r in 0..side {
            let frame = s * side + r;
            if frame >= mel.frames() {
                break;
            }
            let src = &mel.values()[frame * N_MELS..(frame + 1) * N_MELS];
            values[r * side + s * N_MELS..r * side + (s + 1) * N_MELS].copy_from_slice(src);
        }
    }
    MelImage { side, values }
}

/// Element-wise mean over channels.
pub fn avg_mel(mels: &[MelSpectrogram]) -> Result<MelSpectrogram> {
    let first = mels.first().ok_or_else(|| Error::Empty("avg_mel needs at least one channel".into()))?;
    if mels.iter().any(|m| m.frames() != first.frames()) {
        return Err(Error::ShapeMismatch("avg_mel: channels differ in frame count".into()));
    }
    if mels.len() == 1 {
        return Ok(first.clone());
    }
    let mut refs: Vec<&MelSpectrogram> = mels.iter().collect();
    refs.sort_by(|a, b| content_order(a.values(), b.values()));
    let mut acc = vec![0.0; first.values().len()];
    for m in refs {
        for (a, v) in acc.iter_mut().zip(m.values()) {
            *a += v;
        }
    }
    let n = mels.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    MelSpectrogram::new(first.frames(), acc)
}

/// Total order on value lists, used to make channel reductions independent
/// of channel order.
pub(crate) fn content_order(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(a.len().cmp(&b.len()))
}

/// Images fed to the model for one example: one image for `single` and
/// `avg_mel`, one per channel for `sum_pe` (summed after patch embedding).
pub fn model_inputs(mels: &[MelSpectrogram], mode: FusionMode, segments: usize) -> Result<Vec<MelImage>> {
    let first = mels.first().ok_or_else(|| Error::Empty("no channels".into()))?;
    Ok(match mode {
        FusionMode::Single => vec![to_mel_image_with(first, segments)],
        FusionMode::AvgMel => vec![to_mel_image_with(&avg_mel(mels)?, segments)],
        FusionMode::SumPe => {
            let mut images: Vec<MelImage> = mels.iter().map(|m| to_mel_image_with(m, segments)).collect();
            images.sort_by(|a, b| content_order(a.values(), b.values()));
            images
        }
    })
}
