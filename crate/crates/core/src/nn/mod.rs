//! Minimal differentiable building blocks: the backbone contract and a
//! small default convolutional implementation.

mod convnet;
mod tensor;

pub use convnet::{ConvNet, ConvNetConfig, ConvTrace};
pub use tensor::{image_to_tensor, Tensor3};

use crate::error::Result;

/// Activations of the last spatial stage together with the gradient of some
/// scalar with respect to them. Used by Grad-CAM.
#[derive(Clone, Debug)]
pub struct SpatialStage {
    pub activations: Tensor3,
    pub gradients: Tensor3,
}

/// A differentiable map from an input tensor to a `feature_dim` vector.
///
/// Parameters live in one flat buffer so optimizers and checkpoints can treat
/// every backbone uniformly.
pub trait Backbone: Clone + Send + Sync {
    /// Whatever the forward pass needs to keep for the backward pass.
    type Trace;

    fn input_shape(&self) -> (usize, usize, usize);
    fn feature_dim(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    fn forward(&self, input: &Tensor3) -> Result<Self::Trace>;
    fn features<'a>(&self, trace: &'a Self::Trace) -> &'a [f64];

    /// Accumulate `d loss / d params` into `grads` given `d loss / d features`.
    fn backward(&self, trace: &Self::Trace, d_features: &[f64], grads: &mut [f64]);

    /// Last spatial activations and their gradient for the given feature
    /// gradient, or `None` when the backbone has no spatial stage.
    fn spatial_stage(&self, trace: &Self::Trace, d_features: &[f64]) -> Option<SpatialStage>;

    fn num_params(&self) -> usize {
        self.params().len()
    }
}
