use alloc::vec::Vec;

use crate::linalg::Mat;

/// One-dimensional convolution kernel with taps `K[0..=r]`, each `c_out × c_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel1D {
    pub c_out: usize,
    pub c_in: usize,
    pub r: usize,
    pub taps: Vec<Mat>,
    pub stride: usize,
}

impl Kernel1D {
    pub fn zeros(c_out: usize, c_in: usize, r: usize) -> Self {
        let taps = (0..=r).map(|_| Mat::zeros(c_out, c_in)).collect();
        Kernel1D { c_out, c_in, r, taps, stride: 1 }
    }

    pub fn from_fn(c_out: usize, c_in: usize, r: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let taps = (0..=r).map(|t| Mat::from_fn(c_out, c_in, |o, i| f(t, o, i))).collect();
        Kernel1D { c_out, c_in, r, taps, stride: 1 }
    }

    pub fn tap(&self, t: usize) -> &Mat {
        &self.taps[t]
    }
}

/// Two-dimensional kernel with taps `K[t1, t2]`, `0 ≤ t1 ≤ r1`, `0 ≤ t2 ≤ r2`.
///
/// Taps are stored row-major over `(t1, t2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    pub c_out: usize,
    pub c_in: usize,
    pub r1: usize,
    pub r2: usize,
    pub taps: Vec<Mat>,
    pub stride: (usize, usize),
}

impl Kernel2D {
    pub fn zeros(c_out: usize, c_in: usize, r1: usize, r2: usize) -> Self {
        let taps = (0..(r1 + 1) * (r2 + 1)).map(|_| Mat::zeros(c_out, c_in)).collect();
        Kernel2D { c_out, c_in, r1, r2, taps, stride: (1, 1) }
    }

    pub fn from_fn(
        c_out: usize,
        c_in: usize,
        r1: usize,
        r2: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut k = Kernel2D::zeros(c_out, c_in, r1, r2);
        for t1 in 0..=r1 {
            for t2 in 0..=r2 {
                *k.tap_mut(t1, t2) = Mat::from_fn(c_out, c_in, |o, i| f(t1, t2, o, i));
            }
        }
        k
    }

    pub fn with_stride(mut self, s1: usize, s2: usize) -> Self {
        self.stride = (s1, s2);
        self
    }

    #[inline]
    pub fn tap(&self, t1: usize, t2: usize) -> &Mat {
        &self.taps[t1 * (self.r2 + 1) + t2]
    }

    #[inline]
    pub fn tap_mut(&mut self, t1: usize, t2: usize) -> &mut Mat {
        &mut self.taps[t1 * (self.r2 + 1) + t2]
    }

    /// Kernel as a `((r1+1)(r2+1)c_in) × c_out` matrix matching [`super::im2col`] columns.
    pub fn im2col_matrix(&self) -> Mat {
        let taps = (self.r1 + 1) * (self.r2 + 1);
        let mut m = Mat::zeros(taps * self.c_in, self.c_out);
        for (t, k) in self.taps.iter().enumerate() {
            for ci in 0..self.c_in {
                for co in 0..self.c_out {
                    m[(t * self.c_in + ci, co)] = k[(co, ci)];
                }
            }
        }
        m
    }

    pub fn max_abs_diff(&self, other: &Kernel2D) -> f64 {
        self.taps.iter().zip(&other.taps).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max)
    }
}
