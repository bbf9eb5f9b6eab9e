//! Neural primitives over `N×C×T×H×W` activations. Every op has a matching
//! `*_backward` that returns input (and parameter) gradients.

mod activation;
mod batchnorm;
mod conv;
pub mod init;
mod kernels;
mod pointwise;
mod pool;
mod softmax;

pub use activation::{relu, relu_backward};
pub use batchnorm::{batch_norm, batch_norm_backward, BatchNormParams, BnCache, BN_EPSILON, BN_MOMENTUM};
pub use conv::{conv3d, conv3d_backward, conv_output_extent, same_padding, Conv3dGrads, Conv3dParams, Triple};
pub use pointwise::{pointwise_conv, pointwise_conv_backward, PointwiseGrads};
pub use pool::{gap_spatial, gap_spatial_backward, gap_spatiotemporal, gap_spatiotemporal_backward};
pub use softmax::{softmax_over_pathways, softmax_over_pathways_backward};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
