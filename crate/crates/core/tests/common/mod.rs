//! Independent reference implementations shared by the integration tests
//! and the acceptance harness.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::Rng;

/// Direct O(N²) DFT of one Hann-windowed frame, bins 0..=N/2.
pub fn dft_frame(seg: &[f64]) -> Vec<(f64, f64)> {
    let n = seg.len();
    let windowed: Vec<f64> = seg
        .iter()
        .enumerate()
        .map(|(i, x)| x * (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()))
        .collect();
    // exact angles on the n-point circle, indexed by (k·i) mod n
    let (cos, sin): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|j| {
            let ang = -2.0 * PI * j as f64 / n as f64;
            (ang.cos(), ang.sin())
        })
        .unzip();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, x) in windowed.iter().enumerate() {
                let j = (k * i) % n;
                re += x * cos[j];
                im += x * sin[j];
            }
            (re, im)
        })
        .collect()
}

/// Textbook full linear convolution.
pub fn naive_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len() + h.len() - 1];
    for (i, a) in x.iter().enumerate() {
        for (j, b) in h.iter().enumerate() {
            y[i + j] += a * b;
        }
    }
    y
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Index of the largest value, lowest index on ties.
pub fn peak_bin(mags: &[f64]) -> usize {
    let mut best = 0;
    for (i, &m) in mags.iter().enumerate() {
        if m > mags[best] {
            best = i;
        }
    }
    best
}

/// Scalar Adam written out longhand.
pub fn scalar_adam(mut w: f64, grad: impl Fn(f64) -> f64, lr: f64, steps: usize) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut m, mut v) = (0.0, 0.0);
    let mut out = Vec::new();
    for t in 1..=steps {
        let g = grad(w);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t as i32));
        let vh = v / (1.0 - b2.powi(t as i32));
        w -= lr * mh / (vh.sqrt() + eps);
        out.push(w);
    }
    out
}

pub fn random_mel(rng: &mut impl Rng, frames: usize) -> mmser_core::dsp::MelSpectrogram {
    let v = (0..frames * mmser_core::dsp::N_MELS).map(|_| rng.gen_range(-12.0..2.0)).collect();
    mmser_core::dsp::MelSpectrogram::new(frames, v).unwrap()
}

/// One block per stage, width 8, 64×64 input (one mel segment).
pub fn small_config(n_classes: usize) -> mmser_core::model::ModelConfig {
    mmser_core::model::ModelConfig {
        image_size: 64,
        ..mmser_core::model::ModelConfig::tiny(n_classes)
    }
}

pub fn random_image(rng: &mut impl Rng, side: usize) -> mmser_core::fusion::MelImage {
    mmser_core::fusion::MelImage::new(side, (0..side * side).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn loss_at(
    model: &mmser_core::model::HtsatModel,
    params: &mmser_core::grad::ParamStore,
    images: &[mmser_core::fusion::MelImage],
    label: usize,
) -> f64 {
    let mut tape = mmser_core::grad::Tape::new(params);
    let out = model.forward(&mut tape, images, None).unwrap();
    let loss = tape.cross_entropy(out.logits, label).unwrap();
    tape.value(loss).data()[0]
}

pub struct GradSample {
    pub name: String,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradSample {
    /// Relative error with an absolute floor: pairs that agree to 1e-10 pass
    /// whatever their size, since central differences cannot resolve less.
    pub fn rel_error(&self) -> f64 {
        let diff = (self.analytic - self.numeric).abs();
        if diff <= 1e-10 {
            return 0.0;
        }
        diff / self.analytic.abs().max(self.numeric.abs())
    }
}

/// Central differences with step `h` on `n` scalar parameters drawn
/// uniformly without replacement.
pub fn gradient_check(
    model: &mmser_core::model::HtsatModel,
    params: &mmser_core::grad::ParamStore,
    images: &[mmser_core::fusion::MelImage],
    label: usize,
    n: usize,
    h: f64,
    seed: u64,
) -> Vec<GradSample> {
    use rand::SeedableRng;
    let (_, grads) = mmser_core::train::example_gradients(model, params, images, label, None).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, params.num_scalars(), n);
    let mut work = params.clone();
    picks
        .iter()
        .map(|flat| {
            let (id, off) = params.locate(flat).unwrap();
            let analytic = grads.param(id).map_or(0.0, |g| g.data()[off]);
            let orig = params.value(id).data()[off];
            work.get_mut(id).value.data_mut()[off] = orig + h;
            let up = loss_at(model, &work, images, label);
            work.get_mut(id).value.data_mut()[off] = orig - h;
            let down = loss_at(model, &work, images, label);
            work.get_mut(id).value.data_mut()[off] = orig;
            GradSample {
                name: params.get(id).name.clone(),
                analytic,
                numeric: (up - down) / (2.0 * h),
            }
        })
        .collect()
}

/// In-memory toy clips as single-channel training examples.
pub fn toy_examples(n_classes: usize, per_class: usize, duration_s: f64, seed: u64) -> Vec<mmser_core::train::Example> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..per_class {
        for k in 0..n_classes {
            let x = mmser_core::pipeline::toy_clip(k, n_classes, duration_s, &mut rng);
            let mels = mmser_core::dsp::log_mel(&mmser_core::dsp::AudioClip::mono(x)).unwrap();
            out.push(mmser_core::train::Example {
                id: format!("c{k}_{i}"),
                mels,
                label: k,
            });
        }
    }
    out
}
