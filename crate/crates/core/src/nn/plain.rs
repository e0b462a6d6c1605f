#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Pool2d, PoolKind, Tape, Var, ZERO};
use crate::cert::Certificate;
use crate::error::{shape_err, Error, Result};
use crate::linalg::Mat;
use crate::statespace::{conv2d_batch, im2col_indices, Kernel2D, Padding};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(&self, t: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => t.relu(x),
            Activation::Tanh => t.tanh(x),
            Activation::Identity => x,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

fn add_bias(mut y: Mat, bias: &[f64]) -> Mat {
    let c = bias.len();
    for row in y.data_mut().chunks_exact_mut(c.max(1)) {
        row.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
    }
    y
}

/// Shape of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Image { h: usize, w: usize, c: usize },
    Vector(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Image { h, w, c } => h * w * c,
            Shape::Vector(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Channels of an image, length of a vector.
    pub fn channels(&self) -> usize {
        match *self {
            Shape::Image { c, .. } => c,
            Shape::Vector(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlainLayer {
    Conv { kernel: Kernel2D, bias: Vec<f64>, padding: Padding },
    Fc { w: Mat, bias: Vec<f64> },
    Act(Activation),
    Pool { kind: PoolKind, window: (usize, usize), stride: (usize, usize) },
    /// Pixel-major, channel-minor.
    Flatten,
}

/// A network in standard form: kernels, weight matrices and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainNetwork {
    pub input: Shape,
    pub layers: Vec<PlainLayer>,
    pub rho: Option<f64>,
    pub certificate: Option<Certificate>,
}

fn next_shape(k: usize, layer: &PlainLayer, s: Shape) -> Result<Shape> {
    let bad = |detail: alloc::string::String| Error::Shape(format!("layer {k}: {detail}"));
    match (layer, s) {
        (PlainLayer::Conv { kernel, bias, .. }, Shape::Image { h, w, c }) => {
            if kernel.c_in != c {
                return Err(bad(format!("kernel expects {} channels, input has {c}", kernel.c_in)));
            }
            if bias.len() != kernel.c_out {
                return Err(bad(format!("{} biases for {} channels", bias.len(), kernel.c_out)));
            }
            Ok(Shape::Image { h: h.div_ceil(kernel.stride.0), w: w.div_ceil(kernel.stride.1), c: kernel.c_out })
        }
        (PlainLayer::Fc { w, bias }, Shape::Vector(n)) => {
            if w.cols() != n || bias.len() != w.rows() {
                return Err(bad(format!("W is {}x{}, bias {}, input {n}", w.rows(), w.cols(), bias.len())));
            }
            Ok(Shape::Vector(w.rows()))
        }
        (PlainLayer::Act(_), s) => Ok(s),
        (PlainLayer::Pool { window, stride, .. }, Shape::Image { h, w, c }) => {
            if h < window.0 || w < window.1 || stride.0 == 0 || stride.1 == 0 {
                return Err(bad(format!("pool {window:?}/{stride:?} on {h}x{w}")));
            }
            Ok(Shape::Image { h: (h - window.0) / stride.0 + 1, w: (w - window.1) / stride.1 + 1, c })
        }
        (PlainLayer::Flatten, Shape::Image { h, w, c }) => Ok(Shape::Vector(h * w * c)),
        (l, s) => Err(bad(format!("{l:?} cannot take input {s:?}"))),
    }
}

/// Gather indices that first fold `s×s` blocks into channels and then read
/// patches of the folded image.
pub(crate) fn folded_patch_indices(
    batch: usize,
    h: usize,
    w: usize,
    c: usize,
    r: (usize, usize),
    stride: (usize, usize),
    offset: (isize, isize),
) -> Result<(Vec<u32>, usize, usize)> {
    let (s1, s2) = stride;
    if s1 == 1 && s2 == 1 {
        return Ok(im2col_indices(batch, h, w, c, r, (1, 1), offset));
    }
    let fold = crate::statespace::space_to_depth_indices(batch, h, w, c, s1, s2)?;
    let (idx, rows, cols) = im2col_indices(batch, h / s1, w / s2, c * s1 * s2, r, (1, 1), offset);
    let idx = idx.into_iter().map(|k| if k == ZERO { ZERO } else { fold[k as usize] }).collect();
    Ok((idx, rows, cols))
}

/// `y = patches(fold(x)) · K + b` on a `(batch·h·w) × c` activation, where
/// `fold` is space-to-depth by `fold` and the patches are taken at stride 1.
#[allow(clippy::too_many_arguments)]
pub(crate) fn folded_conv_tape(
    t: &mut Tape,
    x: Var,
    kmat: Var,
    bias: Var,
    batch: usize,
    (h, w, c): (usize, usize, usize),
    r: (usize, usize),
    fold: (usize, usize),
    offset: (isize, isize),
) -> Result<Var> {
    let (idx, rows, cols) = folded_patch_indices(batch, h, w, c, r, fold, offset)?;
    let p = t.gather(x, idx, rows, cols)?;
    let y = t.matmul(p, kmat)?;
    t.add_row(y, bias)
}

impl PlainNetwork {
    pub fn new(input: Shape, layers: Vec<PlainLayer>) -> Result<Self> {
        let net = PlainNetwork { input, layers, rho: None, certificate: None };
        net.output_shape()?;
        Ok(net)
    }

    /// Sample shape after every layer.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut s = self.input;
        let mut out = Vec::with_capacity(self.layers.len());
        for (k, l) in self.layers.iter().enumerate() {
            s = next_shape(k, l, s)?;
            out.push(s);
        }
        Ok(out)
    }

    pub fn output_shape(&self) -> Result<Shape> {
        Ok(self.shapes()?.last().copied().unwrap_or(self.input))
    }

    /// Forward pass on a tape; `x` holds one flattened sample per row.
    pub fn forward_tape(&self, t: &mut Tape, x: Var) -> Result<Var> {
        if x.cols() != self.input.len() {
            return Err(shape_err("forward", format!("input has {} columns, expected {}", x.cols(), self.input.len())));
        }
        let batch = x.rows();
        let mut s = self.input;
        let mut cur = match s {
            Shape::Image { c, .. } => t.reshape(x, batch * s.len() / c.max(1), c)?,
            Shape::Vector(_) => x,
        };
        for (k, layer) in self.layers.iter().enumerate() {
            let next = next_shape(k, layer, s)?;
            cur = match (layer, s) {
                (PlainLayer::Conv { kernel, bias, padding }, Shape::Image { h, w, c }) => {
                    let off = padding.offsets(kernel.r1, kernel.r2);
                    let (idx, rows, cols) = im2col_indices(batch, h, w, c, (kernel.r1, kernel.r2), kernel.stride, off);
                    let p = t.gather(cur, idx, rows, cols)?;
                    let km = t.constant(kernel.im2col_matrix());
                    let y = t.matmul(p, km)?;
                    let b = t.constant(Mat::row(bias));
                    t.add_row(y, b)?
                }
                (PlainLayer::Fc { w, bias }, _) => {
                    let wt = t.constant(w.transpose());
                    let y = t.matmul(cur, wt)?;
                    let b = t.constant(Mat::row(bias));
                    t.add_row(y, b)?
                }
                (PlainLayer::Act(a), _) => a.apply(t, cur),
                (PlainLayer::Pool { kind, window, stride }, Shape::Image { h, w, .. }) => {
                    t.pool(cur, Pool2d { kind: *kind, batch, h, w, window: *window, stride: *stride })?
                }
                (PlainLayer::Flatten, _) => t.reshape(cur, batch, next.len())?,
                _ => unreachable!("shape chain checked by next_shape"),
            };
            s = next;
        }
        t.reshape(cur, batch, s.len())
    }

    /// Forward pass on plain values; agrees with [`Self::forward_tape`].
    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        if x.cols() != self.input.len() {
            return Err(shape_err("forward", format!("input has {} columns, expected {}", x.cols(), self.input.len())));
        }
        let batch = x.rows();
        let mut s = self.input;
        let mut cur = match s {
            Shape::Image { c, .. } => x.clone().reshaped(batch * s.len() / c.max(1), c),
            Shape::Vector(_) => x.clone(),
        };
        for (k, layer) in self.layers.iter().enumerate() {
            let next = next_shape(k, layer, s)?;
            cur = match (layer, s) {
                (PlainLayer::Conv { kernel, bias, padding }, Shape::Image { h, w, .. }) => {
                    let off = padding.offsets(kernel.r1, kernel.r2);
                    add_bias(conv2d_batch(&cur, batch, h, w, kernel, off), bias)
                }
                (PlainLayer::Fc { w, bias }, _) => add_bias(cur.mult(w), bias),
                (PlainLayer::Act(a), _) => cur.map(|v| a.eval(v)),
                (PlainLayer::Pool { kind, window, stride }, Shape::Image { h, w, .. }) => {
                    let mut t = Tape::new();
                    let v = t.constant(cur);
                    let p = t.pool(v, Pool2d { kind: *kind, batch, h, w, window: *window, stride: *stride })?;
                    t.value(p).clone()
                }
                (PlainLayer::Flatten, _) => cur.reshaped(batch, next.len()),
                _ => unreachable!("shape chain checked by next_shape"),
            };
            s = next;
        }
        Ok(cur.reshaped(batch, s.len()))
    }

    /// [`Self::forward`] over row chunks of at most `chunk` samples.
    pub fn forward_batched(&self, x: &Mat, chunk: usize) -> Result<Mat> {
        let chunk = chunk.max(1);
        let out_dim = self.output_shape()?.len();
        let mut data = Vec::with_capacity(x.rows() * out_dim);
        let mut start = 0;
        while start < x.rows() {
            let n = chunk.min(x.rows() - start);
            let part = x.block(start, 0, n, x.cols());
            data.extend_from_slice(self.forward(&part)?.data());
            start += n;
        }
        Ok(Mat::from_vec(x.rows(), out_dim, data))
    }
}
