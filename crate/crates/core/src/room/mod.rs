//! Shoebox room simulation: scene sampling, image-source impulse
//! responses and multi-channel convolution.

mod convolve;
mod rir;
mod scene;
mod schroeder;

pub use convolve::{convolve_multichannel, direct_convolve, fft_convolve};
pub use rir::{image_source_rir, image_source_rir_with, sabine_absorption, Reflection, RirOptions, RirSet};
pub use scene::{sample_room, RoomScene};
pub use schroeder::{energy_decay_db, schroeder_t60};

pub const SPEED_OF_SOUND: f64 = 343.0;
pub const ROOM_HEIGHT: f64 = 2.9;
pub const SOURCE_HEIGHT: f64 = 1.75;
pub const MIC_HEIGHT: f64 = 1.6;
pub const WALL_MARGIN: f64 = 0.5;
pub const MIN_SIDE: f64 = 3.0;
pub const MAX_SIDE: f64 = 8.0;
pub const MAX_ASPECT: f64 = 1.6;
