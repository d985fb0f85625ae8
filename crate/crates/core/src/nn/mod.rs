//! Minimal differentiable layers for the Siamese detectors, autoencoders
//! and deep-wide predictors. All arithmetic is `f64`.

mod layers;
pub mod loss;
mod network;
pub mod optim;
mod tensor;
pub mod train;

pub use layers::{Activation, LayerSpec};
pub use loss::{loss, LossKind};
pub use network::{
    backward, bias_name, branch_features, flatten_gradients, forward, head_from_features, predict,
    sign, weight_name, Architecture, Combiner, ForwardCache, Gradients, ModelWeights,
};
pub use optim::AdamState;
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
