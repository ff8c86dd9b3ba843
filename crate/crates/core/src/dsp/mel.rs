use super::stft::Stft;
use super::{AudioClip, EPS_FLOOR, N_FFT_BINS, N_MELS, SAMPLE_RATE, WIN_LENGTH};
use crate::error::{Error, Result};

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular HTK-scale filters, 64 × 513, spanning 0 Hz to Nyquist.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    weights: Vec<f64>,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        N_MELS
    }

    pub fn n_bins(&self) -> usize {
        N_FFT_BINS
    }

    pub fn weight(&self, mel: usize, bin: usize) -> f64 {
        self.weights[mel * N_FFT_BINS + bin]
    }

    pub fn row(&self, mel: usize) -> &[f64] {
        &self.weights[mel * N_FFT_BINS..(mel + 1) * N_FFT_BINS]
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }
}

pub fn mel_filterbank() -> MelFilterbank {
    let (f_min, f_max) = (0.0, SAMPLE_RATE as f64 / 2.0);
    let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..N_MELS + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (N_MELS + 1) as f64))
        .collect();
    let mut weights = vec![0.0; N_MELS * N_FFT_BINS];
    for m in 0..N_MELS {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..N_FFT_BINS {
            let f = k as f64 * SAMPLE_RATE as f64 / WIN_LENGTH as f64;
            let up = (f - lo) / (mid - lo);
            let down = (hi - f) / (hi - mid);
            weights[m * N_FFT_BINS + k] = up.min(down).max(0.0);
        }
    }
    MelFilterbank {
        weights,
        centers_hz: edges[1..=N_MELS].to_vec(),
    }
}

/// Natural-log mel energies, `frames × 64`, row-major by frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    frames: usize,
    values: Vec<f64>,
}

impl MelSpectrogram {
    pub fn new(frames: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != frames * N_MELS {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {frames} frames x {N_MELS} mels",
                values.len()
            )));
        }
        Ok(Self { frames, values })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn n_mels(&self) -> usize {
        N_MELS
    }

    pub fn get(&self, frame: usize, mel: usize) -> f64 {
        self.values[frame * N_MELS + mel]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }
}

/// Reusable log-mel front-end.
pub struct LogMel {
    stft: Stft,
    filterbank: MelFilterbank,
    // (first nonzero bin, weights) per filter
    sparse: Vec<(usize, Vec<f64>)>,
}

impl Default for LogMel {
    fn default() -> Self {
        Self::new()
    }
}

impl LogMel {
    pub fn new() -> Self {
        let filterbank = mel_filterbank();
        let sparse = (0..N_MELS)
            .map(|m| {
                let row = filterbank.row(m);
                let first = row.iter().position(|&w| w > 0.0).unwrap_or(0);
                let last = row.iter().rposition(|&w| w > 0.0).unwrap_or(0);
                (first, row[first..=last].to_vec())
            })
            .collect();
        Self {
            stft: Stft::new(),
            filterbank,
            sparse,
        }
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn channel(&self, signal: &[f64]) -> Result<MelSpectrogram> {
        let spec = self.stft.process(signal)?;
        let mut values = Vec::with_capacity(spec.len() * N_MELS);
        let mut mag = vec![0.0; N_FFT_BINS];
        for frame in &spec {
            for (m, c) in mag.iter_mut().zip(frame) {
                *m = c.norm();
            }
            for (first, w) in &self.sparse {
                let e: f64 = w.iter().zip(&mag[*first..]).map(|(w, m)| w * m).sum();
                values.push(e.max(EPS_FLOOR).ln());
            }
        }
        MelSpectrogram::new(spec.len(), values)
    }

    /// One spectrogram per channel, in channel order.
    pub fn clip(&self, clip: &AudioClip) -> Result<Vec<MelSpectrogram>> {
        clip.channels().iter().map(|c| self.channel(c)).collect()
    }
}

pub fn log_mel(clip: &AudioClip) -> Result<Vec<MelSpectrogram>> {
    LogMel::new().clip(clip)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filterbank_shape_and_support() {
        let fb = mel_filterbank();
        assert_eq!((fb.n_mels(), fb.n_bins()), (64, 513));
        for m in 0..64 {
            assert!(fb.row(m).iter().all(|&w| w >= 0.0));
            assert!(fb.row(m).iter().any(|&w| w > 0.0), "filter {m} is empty");
        }
        assert!(fb.centers_hz().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(fb.weight(0, 512), 0.0);
    }

    #[test]
    fn lowest_filter_matches_triangle_formula() {
        // Edges of filter 0 on the HTK scale: 0 Hz, c1, c2.
        let step = hz_to_mel(8000.0) / 65.0;
        let (c1, c2) = (mel_to_hz(step), mel_to_hz(2.0 * step));
        let fb = mel_filterbank();
        for k in 0..513 {
            let f = k as f64 * 15.625;
            let w = if f <= c1 { f / c1 } else { ((c2 - f) / (c2 - c1)).max(0.0) };
            assert!((fb.weight(0, k) - w).abs() < 1e-12);
        }
    }

    #[test]
    fn silence_hits_the_floor() {
        let mels = log_mel(&AudioClip::mono(vec![0.0; 4000])).unwrap();
        assert!(mels[0].values().iter().all(|&v| v == EPS_FLOOR.ln()));
    }

    #[test]
    fn identical_channels_give_identical_features() {
        let x: Vec<f64> = (0..5000).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
        let mels = log_mel(&AudioClip::new(vec![x.clone(), x.clone(), x]).unwrap()).unwrap();
        assert_eq!(mels.len(), 3);
        assert_eq!(mels[0], mels[1]);
        assert_eq!(mels[1], mels[2]);
    }

    #[test]
    fn too_short_clip_propagates_error() {
        assert!(matches!(
            log_mel(&AudioClip::mono(vec![0.0; 100])),
            Err(Error::InputTooShort { .. })
        ));
    }
}
