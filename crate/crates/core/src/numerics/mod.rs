//! Dense volume container and the numeric kernels the pipeline is built from.
//!
//! Scalars are f32; every reduction (convolution taps, pooling, interpolation
//! blends, dot products) accumulates in f64 in a fixed order, so results do not
//! depend on the rayon thread count.

pub mod activation;
pub mod fd;
pub mod layers;
pub mod pool;
pub mod sample;
pub mod volume;
pub mod weights;

pub use activation::{log_sum_exp, sigmoid, softmax, softplus};
pub use fd::finite_difference_check;
pub use layers::{conv3d, deconv3d_x2, pointwise_mlp, relu, Activation, Conv3dLayer, DenseMatrix, LinearLayer};
pub use pool::{channel_pool, spatial_pool, PoolKind};
pub use sample::{gather_volume, resample_trilinear, sample_point, trilinear_sample, EdgeMode, Stencil};
pub use volume::VoxelVolume;
pub use weights::{ParamStore, Role};
