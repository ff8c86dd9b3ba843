//! PCM WAV I/O at 16 kHz (16-bit integer or 32-bit float).

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let reader = WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::UnsupportedAudio(format!(
            "{}: sample rate {} Hz, expected {SAMPLE_RATE} Hz",
            path.as_ref().display(),
            spec.sample_rate
        )));
    }
    let m = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::UnsupportedAudio(format!(
                "{}: {bits}-bit {fmt:?} samples",
                path.as_ref().display()
            )))
        }
    };
    let frames = interleaved.len() / m;
    let mut channels = vec![Vec::with_capacity(frames); m];
    for frame in interleaved.chunks_exact(m) {
        for (c, &v) in channels.iter_mut().zip(frame) {
            c.push(v);
        }
    }
    AudioClip::new(channels)
}

/// Writes 32-bit float PCM.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let spec = WavSpec {
        channels: clip.n_channels() as u16,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path.as_ref(), spec)?;
    for i in 0..clip.len() {
        for c in clip.channels() {
            w.write_sample(c[i] as f32)?;
        }
    }
    w.finalize()?;
    Ok(())
}

/// Writes 16-bit integer PCM, clipping to [-1, 1).
pub fn write_wav_i16(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let spec = WavSpec {
        channels: clip.n_channels() as u16,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path.as_ref(), spec)?;
    for i in 0..clip.len() {
        for c in clip.channels() {
            w.write_sample((c[i] * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?;
        }
    }
    w.finalize()?;
    Ok(())
}
