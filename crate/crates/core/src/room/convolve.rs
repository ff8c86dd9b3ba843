use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::RirSet;
use crate::dsp::AudioClip;
use crate::error::{Error, Result};

/// Full linear convolution via zero-padded FFTs; length `x + h - 1`.
pub fn fft_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut out = convolve_many(x, std::slice::from_ref(&h.to_vec()));
    out.pop().unwrap_or_default()
}

fn convolve_many(x: &[f64], hs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if x.is_empty() {
        return hs.iter().map(|_| Vec::new()).collect();
    }
    let max_h = hs.iter().map(Vec::len).max().unwrap_or(0);
    if max_h == 0 {
        return hs.iter().map(|_| Vec::new()).collect();
    }
    let n = (x.len() + max_h - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut xf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    xf.resize(n, Complex::new(0.0, 0.0));
    fwd.process(&mut xf);
    hs.iter()
        .map(|h| {
            if h.is_empty() {
                return Vec::new();
            }
            let mut hf: Vec<Complex<f64>> = h.iter().map(|&v| Complex::new(v, 0.0)).collect();
            hf.resize(n, Complex::new(0.0, 0.0));
            fwd.process(&mut hf);
            for (a, b) in hf.iter_mut().zip(&xf) {
                *a *= b;
            }
            inv.process(&mut hf);
            let scale = 1.0 / n as f64;
            hf[..x.len() + h.len() - 1].iter().map(|c| c.re * scale).collect()
        })
        .collect()
}

/// Reference O(N·L) convolution.
pub fn direct_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut y = vec![0.0; x.len() + h.len() - 1];
    for (i, &xv) in x.iter().enumerate() {
        for (j, &hv) in h.iter().enumerate() {
            y[i + j] += xv * hv;
        }
    }
    y
}

/// `y_i = x * h_i` for every microphone.
pub fn convolve_multichannel(x: &[f64], rirs: &RirSet) -> Result<AudioClip> {
    if x.is_empty() {
        return Err(Error::Empty("source signal".into()));
    }
    if rirs.rirs.is_empty() || rirs.is_empty() {
        return Err(Error::Empty("impulse response set".into()));
    }
    AudioClip::new(convolve_many(x, &rirs.rirs))
}
