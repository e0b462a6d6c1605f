use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{fft2, CMat};
use crate::statespace::Image;

/// Orthogonal convolution parameterized per frequency with circular padding.
///
/// Each frequency carries a complex `max(c_in, c_out) × min(c_in, c_out)`
/// matrix mapped through the Cayley transform to a semi-unitary block.
#[derive(Debug, Clone)]
pub struct FourierOrthLayer {
    pub c_in: usize,
    pub c_out: usize,
    pub n: usize,
    /// Row-major over frequencies `(u, v)`.
    pub params: Vec<CMat>,
    pub bias: Vec<f64>,
}

fn partner(n: usize, u: usize, v: usize) -> usize {
    ((n - u) % n) * n + (n - v) % n
}

/// `[U; V]` with `UᴴU + VᴴV = I` from a tall `p×q` complex matrix.
fn cayley_complex(g: &CMat) -> Result<CMat> {
    let (p, q) = (g.rows(), g.cols());
    let one = Complex64::new(1.0, 0.0);
    let mut y = CMat::zeros(q, q);
    let mut z = CMat::zeros(p - q, q);
    for i in 0..p {
        for j in 0..q {
            if i < q {
                y.set(i, j, g.get(i, j));
            } else {
                z.set(i - q, j, g.get(i, j));
            }
        }
    }
    let m = y.sub(&y.adjoint()).add(&z.adjoint().matmul(&z));
    let eye = CMat::identity(q);
    let ipm = eye.add(&m);
    let u = ipm.solve(&eye.sub(&m))?;
    let inv = ipm.solve(&eye)?;
    let v = z.matmul(&inv).scale(one * 2.0);
    let mut out = CMat::zeros(p, q);
    for i in 0..p {
        for j in 0..q {
            out.set(i, j, if i < q { u.get(i, j) } else { v.get(i - q, j) });
        }
    }
    Ok(out)
}

impl FourierOrthLayer {
    pub fn zeros(c_in: usize, c_out: usize, n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::NonPowerOfTwo(n));
        }
        let (p, q) = (c_in.max(c_out), c_in.min(c_out));
        Ok(FourierOrthLayer { c_in, c_out, n, params: vec![CMat::zeros(p, q); n * n], bias: vec![0.0; c_out] })
    }

    pub fn random<R: Rng + ?Sized>(c_in: usize, c_out: usize, n: usize, std: f64, rng: &mut R) -> Result<Self> {
        let mut l = Self::zeros(c_in, c_out, n)?;
        let dist = Normal::new(0.0, std).map_err(|e| Error::InvalidSpec(format!("{e}")))?;
        for m in &mut l.params {
            for x in m.data_mut() {
                *x = Complex64::new(dist.sample(rng), dist.sample(rng));
            }
        }
        Ok(l)
    }

    /// Per-frequency `c_out × c_in` blocks, conjugate-symmetric so that real
    /// inputs map to real outputs.
    pub fn weights(&self) -> Result<Vec<CMat>> {
        let n = self.n;
        let mut out: Vec<Option<CMat>> = vec![None; n * n];
        for u in 0..n {
            for v in 0..n {
                let f = u * n + v;
                let pf = partner(n, u, v);
                if pf < f {
                    let w = out[pf].as_ref().map(|w| conj(w)).ok_or(Error::Singular)?;
                    out[f] = Some(w);
                    continue;
                }
                let mut g = self.params[f].clone();
                if pf == f {
                    g.data_mut().iter_mut().for_each(|x| x.im = 0.0);
                }
                let ut = cayley_complex(&g)?;
                out[f] = Some(if self.c_out <= self.c_in { ut.adjoint() } else { ut });
            }
        }
        Ok(out.into_iter().map(|w| w.unwrap_or_else(|| CMat::zeros(self.c_out, self.c_in))).collect())
    }
}

fn conj(m: &CMat) -> CMat {
    let mut c = m.clone();
    c.data_mut().iter_mut().for_each(|x| *x = x.conj());
    c
}

/// FFT of every channel, per-frequency semi-unitary multiply, inverse FFT.
pub fn fourier_orth_forward(layer: &FourierOrthLayer, x: &Image) -> Result<Image> {
    let n = layer.n;
    if x.h != n || x.w != n {
        return Err(Error::Shape(format!("layer built for {n}x{n}, input is {}x{}", x.h, x.w)));
    }
    if x.c != layer.c_in {
        return Err(Error::ChannelMismatch { expected: layer.c_in, got: x.c });
    }
    let w = layer.weights()?;
    let mut spectra = Vec::with_capacity(x.c);
    for ch in 0..x.c {
        let re: Vec<f64> = (0..n * n).map(|k| x.data[k * x.c + ch]).collect();
        spectra.push(fft2(&CMat::from_real(n, n, &re), false)?);
    }
    let mut out_spec = vec![CMat::zeros(n, n); layer.c_out];
    let mut xf = vec![Complex64::new(0.0, 0.0); x.c];
    for f in 0..n * n {
        for (ch, s) in spectra.iter().enumerate() {
            xf[ch] = s.data()[f];
        }
        let yf = w[f].matvec(&xf);
        for (co, y) in yf.into_iter().enumerate() {
            out_spec[co].data_mut()[f] = y;
        }
    }
    let mut out = Image::zeros(n, n, layer.c_out);
    for (co, s) in out_spec.iter().enumerate() {
        let y = fft2(s, true)?;
        for (k, v) in y.data().iter().enumerate() {
            out.data[k * layer.c_out + co] = v.re + layer.bias[co];
        }
    }
    Ok(out)
}
