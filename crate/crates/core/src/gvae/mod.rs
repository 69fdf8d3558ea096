//! Graph-convolutional variational auto-encoder over a coarsening hierarchy.

mod bspline;
mod conv;
mod layers;
mod model;
mod train;

pub use bspline::{basis_1d, bspline_basis, KernelSpec};
pub use conv::{spline_conv, ConvGeometry, ConvGrad, SplineConvLayer};
pub use layers::{sigmoid, Dense, DenseGrad};
pub use model::{
    elbo_loss, kl_divergence, reparameterize, Architecture, GVaeGrads, GVaeModel, GVaeParams, LatentGaussian,
    LossParts, ModelGeometry, Readout, LOGVAR_CLAMP,
};
pub use train::{fine_tune, mean_loss, remap_dense_layers, train, EpochRecord, TrainConfig, TrainHistory};
