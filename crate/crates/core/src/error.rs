use alloc::string::String;

/// Errors raised by the core pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("segment of {len} samples is shorter than one frame of {frame_len}")]
    TooShort { len: usize, frame_len: usize },

    #[error("clip shorter than one segment ({clip_samples} < {segment_samples} samples)")]
    ClipTooShort {
        clip_samples: usize,
        segment_samples: usize,
    },

    #[error("shape mismatch in {layer}: expected {expected}, got {actual}")]
    Shape {
        layer: String,
        expected: String,
        actual: String,
    },

    #[error("label {label} out of range for {n_classes} classes")]
    InvalidLabel { label: usize, n_classes: usize },

    #[error("empty dataset: {0}")]
    Empty(String),

    #[error("balancing requires two classes present, found {0}")]
    SingleClass(usize),

    #[error("split infeasible: {0}")]
    Split(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
