//! Convolution kernels, their Roesser state-space realizations, and the
//! direct-convolution reference.

mod conv;
mod image;
mod kernel;
pub(crate) mod roesser;

pub use conv::{
    conv2d_batch, direct_conv1d, direct_conv2d, direct_conv2d_naive, im2col, im2col_indices, kernel_to_strided,
    repack_strided, space_to_depth, space_to_depth_indices, Padding,
};
pub use image::Image;
pub use kernel::{Kernel1D, Kernel2D};
pub use roesser::{
    kernel_from_realization_1d, kernel_from_realization_2d, realize_1d, realize_2d, ss_forward_1d,
    ss_forward_2d, Roesser1D, Roesser2D,
};
