use alloc::format;
use alloc::vec::Vec;

use super::{Image, Kernel1D, Kernel2D};
use crate::autodiff::ZERO;
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Placement of the kernel window relative to the output pixel.
///
/// Output `y[i]` reads `u[s·i + o − t]` for taps `t = 0..=r`; reads outside
/// the image are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// `o = 0`: the window ends at the output position.
    Causal,
    /// `o = ⌈r/2⌉`: the window is centred.
    Same,
    Offset(isize, isize),
}

impl Padding {
    pub fn offsets(&self, r1: usize, r2: usize) -> (isize, isize) {
        match *self {
            Padding::Causal => (0, 0),
            Padding::Same => (r1.div_ceil(2) as isize, r2.div_ceil(2) as isize),
            Padding::Offset(a, b) => (a, b),
        }
    }
}

fn out_len(n: usize, s: usize) -> usize {
    n.div_ceil(s)
}

#[inline]
fn src_index(s: usize, i: usize, o: isize, t: usize, n: usize) -> Option<usize> {
    let p = (s * i) as isize + o - t as isize;
    if p >= 0 && (p as usize) < n {
        Some(p as usize)
    } else {
        None
    }
}

fn check_channels(k: &Kernel2D, image: &Image) -> Result<()> {
    if k.c_in != image.c {
        return Err(Error::ChannelMismatch { expected: k.c_in, got: image.c });
    }
    Ok(())
}

/// Nested-sum reference convolution.
pub fn direct_conv2d_naive(k: &Kernel2D, bias: Option<&[f64]>, image: &Image, padding: Padding) -> Result<Image> {
    check_channels(k, image)?;
    let (s1, s2) = k.stride;
    let (o1, o2) = padding.offsets(k.r1, k.r2);
    let (ho, wo) = (out_len(image.h, s1), out_len(image.w, s2));
    let mut out = Image::zeros(ho, wo, k.c_out);
    for i in 0..ho {
        for j in 0..wo {
            let y = out.pixel_mut(i, j);
            if let Some(b) = bias {
                y.copy_from_slice(b);
            }
            for t1 in 0..=k.r1 {
                let Some(p) = src_index(s1, i, o1, t1, image.h) else { continue };
                for t2 in 0..=k.r2 {
                    let Some(q) = src_index(s2, j, o2, t2, image.w) else { continue };
                    let tap = k.tap(t1, t2);
                    let u = image.pixel(p, q);
                    for (co, yv) in y.iter_mut().enumerate() {
                        *yv += crate::linalg::dot(tap.row_slice(co), u);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Patch gather indices into a batch of images stored as `(batch·h·w) × c`.
///
/// Row `(b, i, j)` of the patch matrix holds `u[s1·i + o1 − t1, s2·j + o2 − t2, ci]`
/// in column `(t1·(r2+1) + t2)·c + ci`, with [`ZERO`] for padded reads.
#[allow(clippy::too_many_arguments)]
pub fn im2col_indices(
    batch: usize,
    h: usize,
    w: usize,
    c: usize,
    r: (usize, usize),
    stride: (usize, usize),
    offset: (isize, isize),
) -> (Vec<u32>, usize, usize) {
    let (ho, wo) = (out_len(h, stride.0), out_len(w, stride.1));
    let cols = (r.0 + 1) * (r.1 + 1) * c;
    let rows = batch * ho * wo;
    let mut idx = Vec::with_capacity(rows * cols);
    for b in 0..batch {
        for i in 0..ho {
            for j in 0..wo {
                for t1 in 0..=r.0 {
                    let p = src_index(stride.0, i, offset.0, t1, h);
                    for t2 in 0..=r.1 {
                        let q = src_index(stride.1, j, offset.1, t2, w);
                        match (p, q) {
                            (Some(p), Some(q)) => {
                                let base = ((b * h + p) * w + q) * c;
                                idx.extend((0..c).map(|ci| (base + ci) as u32));
                            }
                            _ => idx.extend(core::iter::repeat_n(ZERO, c)),
                        }
                    }
                }
            }
        }
    }
    (idx, rows, cols)
}

/// Convolution of a batch stored as `(batch·h·w) × c` through an explicit
/// patch matrix, without building an index list. Returns `(batch·ho·wo) × c_out`.
pub fn conv2d_batch(x: &Mat, batch: usize, h: usize, w: usize, kernel: &Kernel2D, offset: (isize, isize)) -> Mat {
    let (c, r, stride) = (kernel.c_in, (kernel.r1, kernel.r2), kernel.stride);
    let (ho, wo) = (out_len(h, stride.0), out_len(w, stride.1));
    let cols = (r.0 + 1) * (r.1 + 1) * c;
    let mut patches = Mat::zeros(batch * ho * wo, cols);
    let src = x.data();
    let dst = patches.data_mut();
    let mut row = 0;
    for b in 0..batch {
        for i in 0..ho {
            for j in 0..wo {
                let out = &mut dst[row * cols..(row + 1) * cols];
                for t1 in 0..=r.0 {
                    let Some(p) = src_index(stride.0, i, offset.0, t1, h) else { continue };
                    for t2 in 0..=r.1 {
                        if let Some(q) = src_index(stride.1, j, offset.1, t2, w) {
                            let base = ((b * h + p) * w + q) * c;
                            let col = (t1 * (r.1 + 1) + t2) * c;
                            out[col..col + c].copy_from_slice(&src[base..base + c]);
                        }
                    }
                }
                row += 1;
            }
        }
    }
    patches.mul_unchecked(&kernel.im2col_matrix())
}

/// Patch matrix of a single image, `(ho·wo) × ((r1+1)(r2+1)c)`.
pub fn im2col(image: &Image, r: (usize, usize), stride: (usize, usize), offset: (isize, isize)) -> Mat {
    let (idx, rows, cols) = im2col_indices(1, image.h, image.w, image.c, r, stride, offset);
    let data = idx
        .iter()
        .map(|&k| if k == ZERO { 0.0 } else { image.data[k as usize] })
        .collect();
    Mat::from_vec(rows, cols, data)
}

/// Convolution through the patch matrix and one matrix product.
pub fn direct_conv2d(k: &Kernel2D, bias: Option<&[f64]>, image: &Image, padding: Padding) -> Result<Image> {
    check_channels(k, image)?;
    let off = padding.offsets(k.r1, k.r2);
    let patches = im2col(image, (k.r1, k.r2), k.stride, off);
    let mut y = patches.mul_unchecked(&k.im2col_matrix());
    if let Some(b) = bias {
        for row in y.data_mut().chunks_mut(k.c_out.max(1)) {
            row.iter_mut().zip(b).for_each(|(v, bb)| *v += bb);
        }
    }
    Ok(Image::from_mat(out_len(image.h, k.stride.0), out_len(image.w, k.stride.1), y))
}

/// One-dimensional convolution of a `len × c_in` signal.
pub fn direct_conv1d(k: &Kernel1D, bias: Option<&[f64]>, signal: &Mat, offset: isize) -> Result<Mat> {
    if signal.cols() != k.c_in {
        return Err(Error::ChannelMismatch { expected: k.c_in, got: signal.cols() });
    }
    let n = signal.rows();
    let lo = out_len(n, k.stride);
    let mut out = Mat::zeros(lo, k.c_out);
    for i in 0..lo {
        if let Some(b) = bias {
            for (co, &bv) in b.iter().enumerate() {
                out[(i, co)] = bv;
            }
        }
        for t in 0..=k.r {
            let Some(p) = src_index(k.stride, i, offset, t, n) else { continue };
            let u = signal.row_slice(p);
            for co in 0..k.c_out {
                out[(i, co)] += crate::linalg::dot(k.tap(t).row_slice(co), u);
            }
        }
    }
    Ok(out)
}

/// Gather indices for [`space_to_depth`] on a batch stored as `(batch·h·w) × c`.
pub fn space_to_depth_indices(batch: usize, h: usize, w: usize, c: usize, s1: usize, s2: usize) -> Result<Vec<u32>> {
    if s1 == 0 || h % s1 != 0 {
        return Err(Error::NotDivisible { size: h, stride: s1 });
    }
    if s2 == 0 || w % s2 != 0 {
        return Err(Error::NotDivisible { size: w, stride: s2 });
    }
    let (ho, wo) = (h / s1, w / s2);
    let mut idx = Vec::with_capacity(batch * h * w * c);
    for b in 0..batch {
        for p in 0..ho {
            for q in 0..wo {
                for a1 in 0..s1 {
                    for a2 in 0..s2 {
                        let base = ((b * h + s1 * p + a1) * w + s2 * q + a2) * c;
                        idx.extend((0..c).map(|ci| (base + ci) as u32));
                    }
                }
            }
        }
    }
    Ok(idx)
}

/// Folds each `s1 × s2` block of pixels into one pixel.
///
/// Output channel `(a1·s2 + a2)·c + ci` holds `u[s1·p + a1, s2·q + a2, ci]`.
pub fn space_to_depth(image: &Image, s1: usize, s2: usize) -> Result<Image> {
    let idx = space_to_depth_indices(1, image.h, image.w, image.c, s1, s2)?;
    let data = idx.iter().map(|&k| image.data[k as usize]).collect();
    Ok(Image::from_vec(image.h / s1, image.w / s2, image.c * s1 * s2, data))
}

struct AxisRepack {
    e: usize,
    offset: isize,
    order: usize,
}

fn axis_repack(r: usize, s: usize, o: isize) -> AxisRepack {
    let si = s as isize;
    let e = (si - 1 - o).rem_euclid(si) as usize;
    let offset = (o + e as isize - si + 1).div_euclid(si);
    AxisRepack { e, offset, order: (r + e) / s }
}

/// Rewrites a strided kernel with offsets `offset` as a stride-1 kernel acting
/// on [`space_to_depth`] inputs. Returns the new kernel and its offsets.
pub fn repack_strided(k: &Kernel2D, offset: (isize, isize)) -> (Kernel2D, (isize, isize)) {
    let (s1, s2) = k.stride;
    let ax1 = axis_repack(k.r1, s1, offset.0);
    let ax2 = axis_repack(k.r2, s2, offset.1);
    let c = k.c_in;
    let mut out = Kernel2D::zeros(k.c_out, c * s1 * s2, ax1.order, ax2.order);
    for tau1 in 0..=ax1.order {
        for tau2 in 0..=ax2.order {
            let tap = out.tap_mut(tau1, tau2);
            for a1 in 0..s1 {
                let t1 = (s1 * tau1 + s1 - 1) as isize - (a1 + ax1.e) as isize;
                if t1 < 0 || t1 as usize > k.r1 {
                    continue;
                }
                for a2 in 0..s2 {
                    let t2 = (s2 * tau2 + s2 - 1) as isize - (a2 + ax2.e) as isize;
                    if t2 < 0 || t2 as usize > k.r2 {
                        continue;
                    }
                    let src = k.tap(t1 as usize, t2 as usize);
                    for co in 0..k.c_out {
                        for ci in 0..c {
                            tap[(co, (a1 * s2 + a2) * c + ci)] = src[(co, ci)];
                        }
                    }
                }
            }
        }
    }
    (out, (ax1.offset, ax2.offset))
}

/// Inverse of [`repack_strided`] for the offset family `o = s·o' + s − 1`.
///
/// Takes a stride-1 kernel over `c_in·s1·s2` folded channels with offsets
/// `o'` and returns the equivalent strided kernel of order `s·(r'+1) − 1`
/// together with its offsets.
pub fn kernel_to_strided(k: &Kernel2D, s1: usize, s2: usize, offset: (isize, isize)) -> Result<(Kernel2D, (isize, isize))> {
    if k.stride != (1, 1) {
        return Err(Error::StridedInput(k.stride.0, k.stride.1));
    }
    if k.c_in % (s1 * s2) != 0 {
        return Err(Error::InvalidSpec(format!(
            "{} folded channels not divisible by {}",
            k.c_in,
            s1 * s2
        )));
    }
    let c = k.c_in / (s1 * s2);
    let (r1, r2) = (s1 * (k.r1 + 1) - 1, s2 * (k.r2 + 1) - 1);
    let mut out = Kernel2D::zeros(k.c_out, c, r1, r2).with_stride(s1, s2);
    for tau1 in 0..=k.r1 {
        for tau2 in 0..=k.r2 {
            let src = k.tap(tau1, tau2);
            for a1 in 0..s1 {
                for a2 in 0..s2 {
                    let (t1, t2) = (s1 * tau1 + s1 - 1 - a1, s2 * tau2 + s2 - 1 - a2);
                    let dst = out.tap_mut(t1, t2);
                    for co in 0..k.c_out {
                        for ci in 0..c {
                            dst[(co, ci)] = src[(co, (a1 * s2 + a2) * c + ci)];
                        }
                    }
                }
            }
        }
    }
    let o = (
        s1 as isize * offset.0 + s1 as isize - 1,
        s2 as isize * offset.1 + s2 as isize - 1,
    );
    Ok((out, o))
}
