use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Image, Kernel1D, Kernel2D};
use crate::error::{Error, Result};
use crate::linalg::Mat;

const STRUCT_TOL: f64 = 1e-12;

/// One-dimensional realization `x[i+1] = A x[i] + B u[i]`, `y[i] = C x[i] + D u[i] + b`.
///
/// The state holds the last `r` inputs, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Roesser1D {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    pub bias: Vec<f64>,
    pub c_in: usize,
    pub c_out: usize,
    pub r: usize,
}

/// Two-dimensional Roesser realization
///
/// ```text
/// x1[i+1, j] = A11 x1[i, j] + A12 x2[i, j] + B1 u[i, j]
/// x2[i, j+1] = A21 x1[i, j] + A22 x2[i, j] + B2 u[i, j]
/// y[i, j]    = C1 x1[i, j] + C2 x2[i, j] + D u[i, j] + b
/// ```
///
/// with `A21 = 0`, `n1 = c_out·r1` and `n2 = c_in·r2`. Boundary states are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Roesser2D {
    pub a11: Mat,
    pub a12: Mat,
    pub a21: Mat,
    pub a22: Mat,
    pub b1: Mat,
    pub b2: Mat,
    pub c1: Mat,
    pub c2: Mat,
    pub d: Mat,
    pub bias: Vec<f64>,
    pub c_in: usize,
    pub c_out: usize,
    pub r1: usize,
    pub r2: usize,
}

/// Block shift with identities on the block superdiagonal.
pub(crate) fn shift_up(blocks: usize, c: usize) -> Mat {
    let n = blocks * c;
    let mut a = Mat::zeros(n, n);
    for k in 0..blocks.saturating_sub(1) {
        for i in 0..c {
            a[(k * c + i, (k + 1) * c + i)] = 1.0;
        }
    }
    a
}

/// Block shift with identities on the block subdiagonal.
pub(crate) fn shift_down(blocks: usize, c: usize) -> Mat {
    shift_up(blocks, c).transpose()
}

/// `[0; …; 0; I]` with `blocks` blocks of `c` rows.
pub(crate) fn last_block_injector(blocks: usize, c: usize) -> Mat {
    let mut b = Mat::zeros(blocks * c, c);
    if blocks > 0 {
        for i in 0..c {
            b[((blocks - 1) * c + i, i)] = 1.0;
        }
    }
    b
}

/// `[0 … 0 I]` with `blocks` blocks of `c` columns.
pub(crate) fn last_block_selector(blocks: usize, c: usize) -> Mat {
    last_block_injector(blocks, c).transpose()
}

fn expect_fixed(name: &str, got: &Mat, want: &Mat) -> Result<()> {
    if got.shape() != want.shape() {
        return Err(Error::StructureViolation(format!(
            "{name} is {}x{}, expected {}x{}",
            got.rows(),
            got.cols(),
            want.rows(),
            want.cols()
        )));
    }
    let dev = got.max_abs_diff(want);
    if dev > STRUCT_TOL {
        return Err(Error::StructureViolation(format!("{name} deviates by {dev:e}")));
    }
    Ok(())
}

pub fn realize_1d(k: &Kernel1D, bias: &[f64]) -> Result<Roesser1D> {
    if k.stride != 1 {
        return Err(Error::StridedInput(k.stride, 1));
    }
    let (ci, co, r) = (k.c_in, k.c_out, k.r);
    let mut c = Mat::zeros(co, r * ci);
    for blk in 0..r {
        c.set_block(0, blk * ci, k.tap(r - blk));
    }
    Ok(Roesser1D {
        a: shift_up(r, ci),
        b: last_block_injector(r, ci),
        c,
        d: k.tap(0).clone(),
        bias: bias.to_vec(),
        c_in: ci,
        c_out: co,
        r,
    })
}

pub fn kernel_from_realization_1d(s: &Roesser1D) -> Result<Kernel1D> {
    expect_fixed("A", &s.a, &shift_up(s.r, s.c_in))?;
    expect_fixed("B", &s.b, &last_block_injector(s.r, s.c_in))?;
    let mut k = Kernel1D::zeros(s.c_out, s.c_in, s.r);
    k.taps[0] = s.d.clone();
    for blk in 0..s.r {
        k.taps[s.r - blk] = s.c.block(0, blk * s.c_in, s.c_out, s.c_in);
    }
    Ok(k)
}

/// Runs the 1-D recursion on a `len × c_in` signal from a zero state.
pub fn ss_forward_1d(s: &Roesser1D, signal: &Mat) -> Result<Mat> {
    if signal.cols() != s.c_in {
        return Err(Error::ChannelMismatch { expected: s.c_in, got: signal.cols() });
    }
    let mut x = vec![0.0; s.a.rows()];
    let mut out = Mat::zeros(signal.rows(), s.c_out);
    for i in 0..signal.rows() {
        let u = signal.row_slice(i);
        let cx = s.c.matvec(&x);
        let du = s.d.matvec(u);
        for co in 0..s.c_out {
            out[(i, co)] = cx[co] + du[co] + s.bias[co];
        }
        let ax = s.a.matvec(&x);
        let bu = s.b.matvec(u);
        x = ax.iter().zip(&bu).map(|(a, b)| a + b).collect();
    }
    Ok(out)
}

/// Lays a stride-1 kernel out as a Roesser model.
///
/// Block `(k, m)` of `[A12 B1; C2 D]` is `K[r1 − k, r2 − m]`.
pub fn realize_2d(k: &Kernel2D, bias: &[f64]) -> Result<Roesser2D> {
    if k.stride != (1, 1) {
        return Err(Error::StridedInput(k.stride.0, k.stride.1));
    }
    let (ci, co, r1, r2) = (k.c_in, k.c_out, k.r1, k.r2);
    let mut full = Mat::zeros((r1 + 1) * co, (r2 + 1) * ci);
    for bk in 0..=r1 {
        for bm in 0..=r2 {
            full.set_block(bk * co, bm * ci, k.tap(r1 - bk, r2 - bm));
        }
    }
    let (n1, n2) = (co * r1, ci * r2);
    Ok(Roesser2D {
        a11: shift_down(r1, co),
        a12: full.block(0, 0, n1, n2),
        a21: Mat::zeros(n2, n1),
        a22: shift_up(r2, ci),
        b1: full.block(0, n2, n1, ci),
        b2: last_block_injector(r2, ci),
        c1: last_block_selector(r1, co),
        c2: full.block(n1, 0, co, n2),
        d: full.block(n1, n2, co, ci),
        bias: bias.to_vec(),
        c_in: ci,
        c_out: co,
        r1,
        r2,
    })
}

pub fn kernel_from_realization_2d(s: &Roesser2D) -> Result<Kernel2D> {
    let (ci, co, r1, r2) = (s.c_in, s.c_out, s.r1, s.r2);
    let (n1, n2) = (co * r1, ci * r2);
    expect_fixed("A11", &s.a11, &shift_down(r1, co))?;
    expect_fixed("A21", &s.a21, &Mat::zeros(n2, n1))?;
    expect_fixed("A22", &s.a22, &shift_up(r2, ci))?;
    expect_fixed("B2", &s.b2, &last_block_injector(r2, ci))?;
    expect_fixed("C1", &s.c1, &last_block_selector(r1, co))?;
    for (name, m, shape) in [
        ("A12", &s.a12, (n1, n2)),
        ("B1", &s.b1, (n1, ci)),
        ("C2", &s.c2, (co, n2)),
        ("D", &s.d, (co, ci)),
    ] {
        if m.shape() != shape {
            return Err(Error::StructureViolation(format!("{name} has shape {:?}, expected {shape:?}", m.shape())));
        }
    }
    let mut k = Kernel2D::zeros(co, ci, r1, r2);
    for bk in 0..=r1 {
        for bm in 0..=r2 {
            let blk = match (bk == r1, bm == r2) {
                (false, false) => s.a12.block(bk * co, bm * ci, co, ci),
                (false, true) => s.b1.block(bk * co, 0, co, ci),
                (true, false) => s.c2.block(0, bm * ci, co, ci),
                (true, true) => s.d.clone(),
            };
            *k.tap_mut(r1 - bk, r2 - bm) = blk;
        }
    }
    Ok(k)
}

fn add3(a: Vec<f64>, b: &[f64], c: &[f64]) -> Vec<f64> {
    a.into_iter().zip(b).zip(c).map(|((x, y), z)| x + y + z).collect()
}

/// Runs the Roesser recursion over the image, row by row, from zero boundary states.
pub fn ss_forward_2d(s: &Roesser2D, image: &Image) -> Result<Image> {
    if image.c != s.c_in {
        return Err(Error::ChannelMismatch { expected: s.c_in, got: image.c });
    }
    let (n1, n2) = (s.a11.rows(), s.a22.rows());
    let mut x1 = vec![vec![0.0; n1]; image.w];
    let mut out = Image::zeros(image.h, image.w, s.c_out);
    for i in 0..image.h {
        let mut x2 = vec![0.0; n2];
        for j in 0..image.w {
            let u = image.pixel(i, j);
            let y = add3(s.c1.matvec(&x1[j]), &s.c2.matvec(&x2), &s.d.matvec(u));
            for (o, (yv, b)) in out.pixel_mut(i, j).iter_mut().zip(y.iter().zip(&s.bias)) {
                *o = yv + b;
            }
            let nx1 = add3(s.a11.matvec(&x1[j]), &s.a12.matvec(&x2), &s.b1.matvec(u));
            let nx2 = add3(s.a21.matvec(&x1[j]), &s.a22.matvec(&x2), &s.b2.matvec(u));
            x1[j] = nx1;
            x2 = nx2;
        }
    }
    Ok(out)
}
