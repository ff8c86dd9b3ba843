use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{schroeder_t60, RoomScene, SPEED_OF_SOUND};
use crate::dsp::SAMPLE_RATE;
use crate::error::{Error, Result};

/// One impulse response per microphone, all of equal length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RirSet {
    pub rirs: Vec<Vec<f64>>,
}

impl RirSet {
    pub fn len(&self) -> usize {
        self.rirs.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_mics(&self) -> usize {
        self.rirs.len()
    }

    pub fn energy(&self) -> f64 {
        self.rirs.iter().flatten().map(|v| v * v).sum()
    }
}

/// How the wall reflection coefficient β is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reflection {
    /// `β = sqrt(1 - α)` with Sabine's `α = 0.161·V / (S·T60)`.
    Sabine,
    /// β tuned so the Schroeder decay of the simulated response hits the
    /// target T60. Sabine's α still decides feasibility.
    DecayMatched,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug)]
pub struct RirOptions {
    pub reflection: Reflection,
    pub speed_of_sound: f64,
    /// Odd length of the Hann-windowed sinc used for fractional delays.
    pub sinc_taps: usize,
}

impl Default for RirOptions {
    fn default() -> Self {
        Self {
            reflection: Reflection::DecayMatched,
            speed_of_sound: SPEED_OF_SOUND,
            sinc_taps: 81,
        }
    }
}

/// Uniform absorption coefficient from Sabine's formula.
pub fn sabine_absorption(scene: &RoomScene) -> f64 {
    0.161 * scene.volume() / (scene.surface() * scene.t60_target)
}

pub fn image_source_rir(scene: &RoomScene) -> Result<RirSet> {
    image_source_rir_with(scene, &RirOptions::default())
}

/// Image-source synthesis in a shoebox with identical walls. Each image
/// contributes `β^reflections / (4π d)` at delay `d·fs/c`, spread onto the
/// sample grid by a windowed sinc. Images are enumerated until their
/// distance exceeds what fits in `ceil(t60·fs)` samples.
pub fn image_source_rir_with(scene: &RoomScene, opts: &RirOptions) -> Result<RirSet> {
    let fs = SAMPLE_RATE as f64;
    let c = opts.speed_of_sound;
    let len = (scene.t60_target * fs).ceil() as usize;
    let half = (opts.sinc_taps / 2) as isize;
    let max_dist = (len as f64 + half as f64) * c / fs;
    let max_refl = 3 * (2 * max_order(scene.dims, max_dist) + 1);
    let width = max_refl + 1;
    // Per microphone: the rendered response split by reflection count, so
    // that h(β) = Σ_r β^r · H_r for any β.
    let tables: Vec<Vec<f64>> = scene
        .mic_pos
        .iter()
        .map(|mic| {
            let mut table = vec![0.0; len * width];
            for_each_image(scene, mic, max_dist, |d, refl| {
                let column = &mut table[refl * len..(refl + 1) * len];
                add_fractional_impulse(column, d * fs / c, 1.0 / (4.0 * PI * d), half);
            });
            table
        })
        .collect();
    let beta = match opts.reflection {
        Reflection::Fixed(b) => b,
        Reflection::Sabine | Reflection::DecayMatched => {
            let alpha = sabine_absorption(scene);
            if alpha >= 1.0 {
                return Err(Error::T60Infeasible { alpha });
            }
            let sabine = (1.0 - alpha).sqrt();
            if opts.reflection == Reflection::Sabine {
                sabine
            } else {
                matched_beta(&tables, len, scene.t60_target, sabine)
            }
        }
    };
    let rirs = tables.iter().map(|t| render(t, len, beta)).collect();
    Ok(RirSet { rirs })
}

/// `Σ_r β^r · H_r` over the reflection-major table.
fn render(table: &[f64], len: usize, beta: f64) -> Vec<f64> {
    let mut h = vec![0.0; len];
    let mut weight = 1.0;
    for column in table.chunks_exact(len) {
        if weight == 0.0 {
            break;
        }
        if column.iter().any(|&v| v != 0.0) {
            for (o, v) in h.iter_mut().zip(column) {
                *o += weight * v;
            }
        }
        weight *= beta;
    }
    h
}

/// Bisects β in `[0, upper]` so that the mean Schroeder T60 over
/// microphones equals the target. Above the Sabine value the truncated
/// response no longer decays by 60 dB and the estimate stops being
/// monotone in β, so the Sabine value bounds the search.
fn matched_beta(tables: &[Vec<f64>], len: usize, target: f64, upper: f64) -> f64 {
    let t60_for = |beta: f64| -> f64 {
        let total: f64 = tables
            .iter()
            .map(|t| schroeder_t60(&render(t, len, beta)).unwrap_or(0.0))
            .sum();
        total / tables.len() as f64
    };
    let (mut lo, mut hi) = (0.0, upper);
    if t60_for(hi) < target {
        return hi;
    }
    for _ in 0..24 {
        let mid = 0.5 * (lo + hi);
        if t60_for(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Calls `f(distance, reflections)` for every image within `max_dist`.
fn for_each_image(scene: &RoomScene, mic: &[f64; 3], max_dist: f64, mut f: impl FnMut(f64, usize)) {
    let axes: Vec<Vec<(f64, usize)>> = (0..3)
        .map(|a| axis_images(scene.source_pos[a], mic[a], scene.dims[a], max_dist))
        .collect();
    let max2 = max_dist * max_dist;
    for &(dx, rx) in &axes[0] {
        let dx2 = dx * dx;
        for &(dy, ry) in &axes[1] {
            let dxy2 = dx2 + dy * dy;
            if dxy2 > max2 {
                continue;
            }
            for &(dz, rz) in &axes[2] {
                let d2 = dxy2 + dz * dz;
                if d2 <= max2 {
                    f(d2.sqrt(), rx + ry + rz);
                }
            }
        }
    }
}

fn max_order(dims: [f64; 3], max_dist: f64) -> usize {
    dims.iter().map(|l| (max_dist / (2.0 * l)).ceil() as usize + 1).max().unwrap_or(1)
}

/// Image offsets along one axis relative to the receiver, with the number
/// of wall reflections each image implies.
fn axis_images(src: f64, rcv: f64, side: f64, max_dist: f64) -> Vec<(f64, usize)> {
    let n_max = (max_dist / (2.0 * side)).ceil() as i64 + 1;
    let mut out = Vec::new();
    for n in -n_max..=n_max {
        for q in 0..2i64 {
            let pos = 2.0 * n as f64 * side + if q == 0 { src } else { -src };
            let offset = pos - rcv;
            if offset.abs() <= max_dist {
                out.push((offset, (2 * n - q).unsigned_abs() as usize));
            }
        }
    }
    out
}

/// Adds `amp · w(t-τ) · sinc(t-τ)` for the taps around `tau`, where `w` is a
/// Hann window spanning `2·half + 1` samples.
fn add_fractional_impulse(h: &mut [f64], tau: f64, amp: f64, half: isize) {
    let len = h.len();
    let n0 = tau.round() as isize;
    let frac = tau - n0 as f64;
    let width = (2 * half + 1) as f64;
    let sin_pf = (PI * frac).sin();
    // Window angle 2π(k - frac)/width advanced by rotation.
    let step = 2.0 * PI / width;
    let (sin_step, cos_step) = step.sin_cos();
    let start = step * (-half as f64 - frac);
    let (mut s, mut co) = start.sin_cos();
    for k in -half..=half {
        let t = n0 + k;
        if t >= 0 && (t as usize) < len {
            let x = k as f64 - frac;
            let sinc = if x.abs() < 1e-12 {
                1.0
            } else {
                // sin(π(k - frac)) = -(-1)^k sin(π frac)
                let sign = if k.rem_euclid(2) == 0 { -1.0 } else { 1.0 };
                sign * sin_pf / (PI * x)
            };
            h[t as usize] += amp * 0.5 * (1.0 + co) * sinc;
        }
        let next_co = co * cos_step - s * sin_step;
        s = s * cos_step + co * sin_step;
        co = next_co;
    }
}
