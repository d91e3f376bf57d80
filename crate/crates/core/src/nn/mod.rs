//! Feed-forward convolutional networks with dropout.
//!
//! Activations are flat `f64` buffers in row-major, channel-last order.
//! Convolutions use valid padding: an output pixel exists only where the
//! whole kernel fits inside the input, so a `k`-wide kernel with stride `s`
//! maps width `w` to `(w - k) / s + 1`.

mod backprop;
mod layers;
mod loss;
mod network;
mod preset;
mod spec;
mod train;

pub use backprop::Gradients;
pub use loss::{loss, LossKind, CE_EPSILON};
pub use network::{ForwardTrace, LayerParams, Masks, Mode, Network};
pub use preset::{build_preset, PresetScale, DEFAULT_P_DROP, DEFAULT_L2_LAMBDA};
pub use spec::{Head, HeadKind, LayerSpec, NetworkSpec};
pub use train::{train, train_with_progress, Target, TrainConfig, TrainReport, TrainingSet};
pub use crate::math::softmax;
