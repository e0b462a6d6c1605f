#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), rows * cols, "CMat::from_vec length mismatch");
        CMat { rows, cols, data }
    }

    pub fn from_real(rows: usize, cols: usize, re: &[f64]) -> Self {
        assert_eq!(re.len(), rows * cols);
        CMat { rows, cols, data: re.iter().map(|&x| Complex64::new(x, 0.0)).collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.re).collect()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMat {
        let mut t = CMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j].conj();
            }
        }
        t
    }

    pub fn matmul(&self, b: &CMat) -> CMat {
        assert_eq!(self.cols, b.rows, "CMat matmul shape mismatch");
        let m = b.cols;
        let mut out = CMat::zeros(self.rows, m);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                for j in 0..m {
                    out.data[i * m + j] += a * b.data[k * m + j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                row.iter().zip(v).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    pub fn add(&self, b: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (b.rows, b.cols));
        let data = self.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
        CMat { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, b: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (b.rows, b.cols));
        let data = self.data.iter().zip(&b.data).map(|(x, y)| x - y).collect();
        CMat { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: Complex64) -> CMat {
        CMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    /// `self⁻¹ b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &CMat) -> Result<CMat> {
        assert_eq!(self.rows, self.cols);
        assert_eq!(self.rows, b.rows);
        let n = self.rows;
        let m = b.cols;
        let mut a = self.clone();
        let mut x = b.clone();
        for k in 0..n {
            let mut p = k;
            for i in k + 1..n {
                if a.get(i, k).norm() > a.get(p, k).norm() {
                    p = i;
                }
            }
            if a.get(p, k).norm() <= 1e-300 {
                return Err(Error::Singular);
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                }
                for j in 0..m {
                    x.data.swap(k * m + j, p * m + j);
                }
            }
            let inv = a.get(k, k).inv();
            for i in k + 1..n {
                let f = a.get(i, k) * inv;
                if f.norm_sqr() == 0.0 {
                    continue;
                }
                for j in k..n {
                    let v = a.get(k, j);
                    a.data[i * n + j] -= f * v;
                }
                for j in 0..m {
                    let v = x.get(k, j);
                    x.data[i * m + j] -= f * v;
                }
            }
        }
        for i in (0..n).rev() {
            let inv = a.get(i, i).inv();
            for j in 0..m {
                let mut s = x.get(i, j);
                for k in i + 1..n {
                    s -= a.get(i, k) * x.get(k, j);
                }
                x.data[i * m + j] = s * inv;
            }
        }
        Ok(x)
    }
}

/// In-place radix-2 transform of a strided sequence.
fn fft_line(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * core::f64::consts::PI / len as f64;
        let w_len = Complex64::new(f64::cos(ang), f64::sin(ang));
        for start in (0..n).step_by(len) {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let u = buf[start + k];
                let v = buf[start + k + len / 2] * w;
                buf[start + k] = u + v;
                buf[start + k + len / 2] = u - v;
                w *= w_len;
            }
        }
        len <<= 1;
    }
}

/// Two-dimensional radix-2 FFT over rows and columns.
///
/// The inverse transform is scaled by `1/(rows·cols)`.
pub fn fft2(x: &CMat, inverse: bool) -> Result<CMat> {
    for d in [x.rows, x.cols] {
        if !d.is_power_of_two() {
            return Err(Error::NonPowerOfTwo(d));
        }
    }
    let (r, c) = (x.rows, x.cols);
    let mut out = x.clone();
    for i in 0..r {
        fft_line(&mut out.data[i * c..(i + 1) * c], inverse);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); r];
    for j in 0..c {
        for i in 0..r {
            col[i] = out.data[i * c + j];
        }
        fft_line(&mut col, inverse);
        for i in 0..r {
            out.data[i * c + j] = col[i];
        }
    }
    if inverse {
        let s = 1.0 / (r * c) as f64;
        out.data.iter_mut().for_each(|z| *z *= s);
    }
    Ok(out)
}
