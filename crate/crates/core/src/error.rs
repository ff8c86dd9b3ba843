use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input too short: {len} samples, need at least {needed}")]
    InputTooShort { len: usize, needed: usize },

    #[error("t60 infeasible for geometry: Sabine absorption {alpha:.4} >= 1")]
    T60Infeasible { alpha: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("backward called on a value that was not recorded by a forward pass")]
    NoForward,

    #[error("empty input: {0}")]
    Empty(String),

    #[error("unsupported audio: {0}")]
    UnsupportedAudio(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("checkpoint incompatible with config: field `{field}` is {checkpoint} in checkpoint but {config} in config")]
    Incompatible {
        field: String,
        checkpoint: String,
        config: String,
    },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-parsable class name, printed by the CLI on failure.
    pub fn class(&self) -> &'static str {
        match self {
            Error::InputTooShort { .. } => "input_too_short",
            Error::T60Infeasible { .. } => "t60_infeasible",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InvalidConfig(_) => "invalid_config",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::NoForward => "no_forward",
            Error::Empty(_) => "empty_input",
            Error::UnsupportedAudio(_) => "unsupported_audio",
            Error::Format(_) => "malformed_file",
            Error::Incompatible { .. } => "incompatible_checkpoint",
            Error::Manifest(_) => "manifest",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Wav(_) => "wav",
            Error::Csv(_) => "csv",
        }
    }
}
