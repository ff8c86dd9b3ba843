//! Reverse-mode differentiation, loss, optimizer and learning-rate schedule.

pub mod loss;
pub mod optim;
pub mod params;
pub mod tape;

pub use loss::{cross_entropy, softmax};
pub use optim::{lr_schedule, Adam, AdamConfig};
pub use params::{Gradients, Param, ParamId, ParamStore};
pub use tape::{Tape, Var, PAD_ROW};
