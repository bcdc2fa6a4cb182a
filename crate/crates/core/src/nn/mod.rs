//! A small neural-network stack with exact, hand-derived gradients.
//!
//! Parameters of a [`Network`] live in one flat `Vec<f64>`; each layer owns a
//! contiguous slice of it. That keeps the optimizer, weight restoration and
//! serialization trivial. Training is single-threaded and deterministic
//! given its seed.

mod adam;
mod layers;
mod loss;
mod network;
mod tensor;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use layers::{Layer, LayerSpec};
pub use loss::{cross_entropy, log_softmax, relu, relu_grad_mask, softmax, softmax_cross_entropy};
pub use network::{argmax, Mode, Network, Trace};
pub use tensor::Tensor;
pub use train::{
    evaluate, train, Clock, EpochMetrics, Evaluation, Example, Model, NoClock, StopReason, TrainConfig, TrainOutcome,
};
