//! Hierarchical windowed-attention audio classifier and its checkpoints.

mod checkpoint;
mod config;
mod htsat;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use config::{ModelConfig, N_STAGES};
pub use htsat::{AttentionOutput, ForwardOutput, HtsatModel};
