use super::SAMPLE_RATE;
use crate::error::{Error, Result};

/// Multi-channel waveform at 16 kHz; every channel has the same length.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    channels: Vec<Vec<f64>>,
}

impl AudioClip {
    pub fn new(channels: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = channels.first() else {
            return Err(Error::Empty("audio clip has no channels".into()));
        };
        if channels.iter().any(|c| c.len() != first.len()) {
            return Err(Error::ShapeMismatch("audio channels differ in length".into()));
        }
        Ok(Self { channels })
    }

    pub fn mono(samples: Vec<f64>) -> Self {
        Self { channels: vec![samples] }
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels[0].is_empty()
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Keeps only the first `m` channels.
    pub fn take_channels(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.channels.len() {
            return Err(Error::InvalidArgument(format!(
                "requested {m} channels from a {}-channel clip",
                self.channels.len()
            )));
        }
        Ok(Self {
            channels: self.channels[..m].to_vec(),
        })
    }
}
