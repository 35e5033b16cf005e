//! Multi-channel one-dimensional CNN over `channels × time` series.
//!
//! Convolution and pooling slide along time only. The network ends in a
//! softmax classifier; the activations feeding it (the last fully-connected
//! layer, after its ReLU) are the learned temporal features.

mod network;
pub mod ops;
mod spec;
mod train;

pub use network::{
    backward, extract_features, forward, loss, predict_proba, ForwardCache, LayerParams, NetworkState,
};
pub use ops::{conv1d_backward, conv1d_forward, max1d_backward, max1d_forward};
pub use spec::{default_architecture, format_architecture, parse_architecture, LayerSpec, NetworkSpec};
pub use train::{batch_gradient, train, TrainConfig, TrainOutcome};
