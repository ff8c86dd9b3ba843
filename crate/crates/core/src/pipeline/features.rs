use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::manifest::{Manifest, Split};
use super::simulate::SceneRecord;
use crate::dsp::wav::read_wav;
use crate::dsp::{LogMel, MelSpectrogram, N_MELS};
use crate::error::{Error, Result};
use crate::io::{load_tensor, save_tensor, Dtype};
use crate::tensor::Tensor;
use crate::train::Example;

/// Bumped whenever the front end changes, invalidating cached features.
pub const FEATURE_VERSION: &str = "logmel-1024-160-64-v1";

/// Log-mel features of WAV files, cached as `MMTN` tensors
/// `[channels, frames, 64]` keyed by the SHA-256 of the file content.
pub struct FeatureCache {
    dir: Option<PathBuf>,
    front_end: LogMel,
}

impl FeatureCache {
    pub fn new(dir: Option<PathBuf>) -> Result<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
        }
        Ok(Self {
            dir,
            front_end: LogMel::new(),
        })
    }

    pub fn key(wav_bytes: &[u8]) -> String {
        let mut h = Sha256::new();
        h.update(FEATURE_VERSION.as_bytes());
        h.update(wav_bytes);
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn features(&self, wav: &Path) -> Result<Vec<MelSpectrogram>> {
        let bytes = fs::read(wav)?;
        let cached = self.dir.as_ref().map(|d| d.join(format!("{}.mmtn", Self::key(&bytes))));
        if let Some(path) = cached.as_ref().filter(|p| p.exists()) {
            let (t, _) = load_tensor(path)?;
            return unpack(&t);
        }
        let clip = read_wav(wav)?;
        let mels = self.front_end.clip(&clip)?;
        if let Some(path) = cached {
            save_tensor(path, &pack(&mels)?, Dtype::F64)?;
        }
        Ok(mels)
    }
}

fn pack(mels: &[MelSpectrogram]) -> Result<Tensor> {
    let frames = mels.first().map_or(0, MelSpectrogram::frames);
    let data = mels.iter().flat_map(|m| m.values().iter().copied()).collect();
    Tensor::new(vec![mels.len(), frames, N_MELS], data)
}

fn unpack(t: &Tensor) -> Result<Vec<MelSpectrogram>> {
    let &[m, frames, mels] = t.shape() else {
        return Err(Error::Format(format!("cached features have shape {:?}", t.shape())));
    };
    if mels != N_MELS {
        return Err(Error::Format(format!("cached features have {mels} mel bands")));
    }
    (0..m)
        .map(|c| MelSpectrogram::new(frames, t.data()[c * frames * N_MELS..(c + 1) * frames * N_MELS].to_vec()))
        .collect()
}

/// Examples of one split with their evaluation condition (scene condition,
/// or `clean` for rows without a scene).
pub fn load_split(
    manifest: &Manifest,
    split: Split,
    classes: &[String],
    cache: &FeatureCache,
) -> Result<(Vec<Example>, Vec<String>)> {
    let mut examples = Vec::new();
    let mut conditions = Vec::new();
    for row in manifest.split(split) {
        let label = classes
            .iter()
            .position(|c| *c == row.label)
            .ok_or_else(|| Error::Manifest(format!("label `{}` is not a configured class", row.label)))?;
        let mels = cache.features(&manifest.resolve(&row.clip_path))?;
        let condition = match &row.scene_ref {
            Some(s) => SceneRecord::load(manifest.resolve(s))?.condition,
            None => "clean".to_string(),
        };
        examples.push(Example {
            id: row.clip_path.clone(),
            mels,
            label,
        });
        conditions.push(condition);
    }
    Ok((examples, conditions))
}
