pub mod augment;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod grad;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod room;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
