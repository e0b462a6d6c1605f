use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Mat;

/// Multi-channel image, channels contiguous per pixel, pixels row-major:
/// `data[(i·w + j)·c + ch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Image { h, w, c, data: vec![0.0; h * w * c] }
    }

    pub fn from_vec(h: usize, w: usize, c: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), h * w * c, "image data length");
        Image { h, w, c, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, ch: usize) -> f64 {
        self.data[(i * self.w + j) * self.c + ch]
    }

    #[inline]
    pub fn pixel(&self, i: usize, j: usize) -> &[f64] {
        let k = (i * self.w + j) * self.c;
        &self.data[k..k + self.c]
    }

    #[inline]
    pub fn pixel_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let k = (i * self.w + j) * self.c;
        &mut self.data[k..k + self.c]
    }

    /// Pixels as rows of an `(h·w) × c` matrix.
    pub fn to_mat(&self) -> Mat {
        Mat::from_vec(self.h * self.w, self.c, self.data.clone())
    }

    pub fn from_mat(h: usize, w: usize, m: Mat) -> Self {
        assert_eq!(m.rows(), h * w);
        let c = m.cols();
        Image { h, w, c, data: m.into_vec() }
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!((self.h, self.w, self.c), (other.h, other.w, other.c));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn norm2(&self) -> f64 {
        crate::linalg::norm2(&self.data)
    }
}
