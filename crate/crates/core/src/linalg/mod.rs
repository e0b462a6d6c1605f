//! Dense real and complex matrix kernels.

mod cmat;
mod decomp;
mod eigen;
mod mat;
#[cfg(test)]
pub(crate) mod testutil;

pub use cmat::{fft2, CMat};
pub use decomp::{
    cholesky, inverse, inverse_psd, inverse_upper, solve, solve_psd, solve_upper, solve_upper_t, Lu,
};
pub use eigen::{eig_sym, max_eig_sym, min_eig_sym, spectral_norm, spectral_norm_with_vector};
pub use mat::{dot, norm2, Mat};
