use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{frame_count, HOP_LENGTH, N_FFT_BINS, WIN_LENGTH};
use crate::error::{Error, Result};

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Reusable analysis plan: 1024-sample Hann frames every 160 samples,
/// frames starting at offset 0 (no centre padding).
pub struct Stft {
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Default for Stft {
    fn default() -> Self {
        Self::new()
    }
}

impl Stft {
    pub fn new() -> Self {
        Self {
            window: hann_window(WIN_LENGTH),
            fft: FftPlanner::new().plan_fft_forward(WIN_LENGTH),
        }
    }

    /// One-sided spectra, `frames × 513`.
    pub fn process(&self, signal: &[f64]) -> Result<Vec<Vec<Complex<f64>>>> {
        if signal.len() < WIN_LENGTH {
            return Err(Error::InputTooShort {
                len: signal.len(),
                needed: WIN_LENGTH,
            });
        }
        let frames = frame_count(signal.len());
        let mut buf = vec![Complex::new(0.0, 0.0); WIN_LENGTH];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut out = Vec::with_capacity(frames);
        for t in 0..frames {
            let seg = &signal[t * HOP_LENGTH..t * HOP_LENGTH + WIN_LENGTH];
            for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex::new(x * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            out.push(buf[..N_FFT_BINS].to_vec());
        }
        Ok(out)
    }
}

pub fn stft(signal: &[f64]) -> Result<Vec<Vec<Complex<f64>>>> {
    Stft::new().process(signal)
}
