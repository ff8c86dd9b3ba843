//! Log-mel front-end: STFT, mel filterbank and WAV I/O.

mod audio;
mod mel;
mod stft;
pub mod wav;

pub use audio::AudioClip;
pub use mel::{log_mel, mel_filterbank, mel_to_hz, hz_to_mel, LogMel, MelFilterbank, MelSpectrogram};
pub use stft::{hann_window, stft, Stft};

pub const SAMPLE_RATE: u32 = 16_000;
pub const WIN_LENGTH: usize = 1024;
pub const HOP_LENGTH: usize = 160;
pub const N_FFT_BINS: usize = WIN_LENGTH / 2 + 1;
pub const N_MELS: usize = 64;
pub const EPS_FLOOR: f64 = 1e-10;

/// Frames produced from `n` samples without centre padding.
pub fn frame_count(n: usize) -> usize {
    if n < WIN_LENGTH {
        0
    } else {
        (n - WIN_LENGTH) / HOP_LENGTH + 1
    }
}
