//! Synthetic stand-in corpus: class `k` of `K` is a harmonic stack at
//! `110·2^(k/K)` Hz with a class-specific amplitude-modulation rate, plus
//! white noise 20 dB below the signal.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, ManifestRow, Split};
use crate::dsp::wav::write_wav;
use crate::dsp::{AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};

const N_HARMONICS: usize = 6;
const SNR_DB: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToySpec {
    pub n_classes: usize,
    pub n_per_class: usize,
    pub duration_s: f64,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            n_classes: 4,
            n_per_class: 50,
            duration_s: 1.0,
            seed: 0,
        }
    }
}

pub fn toy_class_name(k: usize) -> String {
    format!("class{k}")
}

pub fn toy_f0(k: usize, n_classes: usize) -> f64 {
    110.0 * 2f64.powf(k as f64 / n_classes as f64)
}

pub fn toy_am_rate(k: usize) -> f64 {
    2.0 + 1.5 * k as f64
}

/// Noise-free clip of class `k`: fundamental at unit amplitude, upper
/// harmonics at roughly `1/h` with random phases, peak-normalized to 0.5.
pub fn toy_clean(k: usize, n_classes: usize, duration_s: f64, rng: &mut impl Rng) -> Vec<f64> {
    let n = (duration_s * SAMPLE_RATE as f64).round() as usize;
    let f0 = toy_f0(k, n_classes);
    let rate = toy_am_rate(k);
    let fs = SAMPLE_RATE as f64;
    let harmonics: Vec<(f64, f64)> = (1..=N_HARMONICS)
        .map(|h| {
            let amp = if h == 1 { 1.0 } else { rng.gen_range(0.6..1.0) / h as f64 };
            (amp, rng.gen_range(0.0..2.0 * PI))
        })
        .collect();
    let am_phase = rng.gen_range(0.0..2.0 * PI);
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let tone: f64 = harmonics
                .iter()
                .enumerate()
                .map(|(j, (a, ph))| a * (2.0 * PI * (j + 1) as f64 * f0 * t + ph).sin())
                .sum();
            tone * (1.0 + 0.5 * (2.0 * PI * rate * t + am_phase).sin())
        })
        .collect();
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut x {
            *v *= 0.5 / peak;
        }
    }
    x
}

/// Clean clip plus white noise at 20 dB SNR.
pub fn toy_clip(k: usize, n_classes: usize, duration_s: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut x = toy_clean(k, n_classes, duration_s, rng);
    let power = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    let sigma = (power / 10f64.powf(SNR_DB / 10.0)).sqrt();
    if sigma > 0.0 {
        let noise = Normal::new(0.0, sigma).expect("finite sigma");
        for v in &mut x {
            *v += noise.sample(rng);
        }
    }
    x
}

fn clip_rng(seed: u64, k: usize, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((k as u64) << 32) | i as u64);
    rng
}

/// Stratified 80/10/10 split sizes for `n` clips of one class.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = (n as f64 * 0.8).round() as usize;
    let val = ((n as f64 * 0.1).round() as usize).min(n - train);
    (train, val, n - train - val)
}

/// Writes `clips/classK_III.wav` and `manifest.csv` under `out_dir`.
pub fn generate_toy_corpus(spec: &ToySpec, out_dir: &Path) -> Result<Manifest> {
    if spec.n_classes < 2 {
        return Err(Error::InvalidArgument(format!("toy corpus needs K >= 2, got {}", spec.n_classes)));
    }
    if spec.n_per_class == 0 || !(spec.duration_s > 0.0) {
        return Err(Error::InvalidArgument("n_per_class and duration_s must be positive".into()));
    }
    fs::create_dir_all(out_dir.join("clips"))?;
    let mut rows = Vec::with_capacity(spec.n_classes * spec.n_per_class);
    let (n_train, n_val, _) = split_sizes(spec.n_per_class);
    for k in 0..spec.n_classes {
        let mut order: Vec<usize> = (0..spec.n_per_class).collect();
        order.shuffle(&mut clip_rng(spec.seed, k, usize::MAX >> 32));
        for i in 0..spec.n_per_class {
            let samples = toy_clip(k, spec.n_classes, spec.duration_s, &mut clip_rng(spec.seed, k, i));
            let rel = format!("clips/{}_{i:03}.wav", toy_class_name(k));
            write_wav(out_dir.join(&rel), &AudioClip::mono(samples))?;
            let rank = order.iter().position(|&o| o == i).expect("permutation");
            let split = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            rows.push(ManifestRow {
                clip_path: rel,
                label: toy_class_name(k),
                split,
                scene_ref: None,
            });
        }
    }
    let manifest = Manifest::new(out_dir, rows);
    manifest.save(out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_frequencies() {
        assert_eq!(toy_f0(0, 4), 110.0);
        assert!((toy_f0(2, 4) - 110.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!(toy_f0(3, 4) < 220.0);
    }

    #[test]
    fn split_sizes_follow_80_10_10() {
        assert_eq!(split_sizes(50), (40, 5, 5));
        assert_eq!(split_sizes(10), (8, 1, 1));
        assert_eq!(split_sizes(1), (1, 0, 0));
    }

    #[test]
    fn noise_is_twenty_db_down() {
        let mut a = clip_rng(3, 1, 2);
        let mut b = clip_rng(3, 1, 2);
        let clean = toy_clean(1, 4, 0.5, &mut a);
        let noisy = toy_clip(1, 4, 0.5, &mut b);
        let ps: f64 = clean.iter().map(|v| v * v).sum();
        let pn: f64 = clean.iter().zip(&noisy).map(|(c, n)| (n - c) * (n - c)).sum();
        let snr = 10.0 * (ps / pn).log10();
        assert!((snr - 20.0).abs() < 0.5, "snr {snr}");
    }
}
