//! Datasets: MNIST from IDX bytes, synthetic cosine regression, seeded batching.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::nn::Shape;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Zeros added on every side of a 28×28 MNIST digit.
pub const MNIST_PAD: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Labels(Vec<usize>),
    /// One regression target per row.
    Values(Mat),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Labels(l) => l.len(),
            Targets::Values(v) => v.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Labels(l) => Targets::Labels(idx.iter().map(|&i| l[i]).collect()),
            Targets::Values(v) => Targets::Values(select_rows(v, idx)),
        }
    }
}

/// How raw values were mapped to the stored inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    /// Stored value = raw / `divisor`.
    pub divisor: f64,
    /// Zero border added to each image side.
    pub pad: usize,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization { divisor: 1.0, pad: 0 }
    }
}

/// Samples stored one per row, images flattened pixel-major, channel-minor.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Mat,
    pub targets: Targets,
    pub shape: Shape,
    pub norm: Normalization,
}

fn select_rows(m: &Mat, idx: &[usize]) -> Mat {
    let c = m.cols();
    let mut data = Vec::with_capacity(idx.len() * c);
    for &i in idx {
        data.extend_from_slice(m.row_slice(i));
    }
    Mat::from_vec(idx.len(), c, data)
}

impl Dataset {
    pub fn new(inputs: Mat, targets: Targets, shape: Shape) -> Result<Self> {
        if inputs.rows() != targets.len() {
            return Err(Error::CountMismatch { images: inputs.rows(), labels: targets.len() });
        }
        if inputs.cols() != shape.len() {
            return Err(Error::Shape(alloc::format!("rows of length {} for shape {:?}", inputs.cols(), shape)));
        }
        Ok(Dataset { inputs, targets, shape, norm: Normalization::default() })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Labels(l) => Some(l),
            Targets::Values(_) => None,
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: select_rows(&self.inputs, idx),
            targets: self.targets.select(idx),
            shape: self.shape,
            norm: self.norm,
        }
    }

    /// The first `n` samples (or all of them).
    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let s = bytes.get(at..at + 4).ok_or(Error::TruncatedFile { needed: at + 4, found: bytes.len() })?;
    Ok(u32::from_be_bytes([s[0], s[1], s[2], s[3]]))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::BadMagic { found, expected });
    }
    Ok(())
}

/// Raw IDX image file: `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    let r = be_u32(bytes, 8)? as usize;
    let c = be_u32(bytes, 12)? as usize;
    let needed = 16 + n * r * c;
    if bytes.len() < needed {
        return Err(Error::TruncatedFile { needed, found: bytes.len() });
    }
    Ok((n, r, c, bytes[16..needed].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let n = be_u32(bytes, 4)? as usize;
    let needed = 8 + n;
    if bytes.len() < needed {
        return Err(Error::TruncatedFile { needed, found: bytes.len() });
    }
    Ok(bytes[8..needed].to_vec())
}

pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols).max(1);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Zero-pads every single-channel `h×w` row of `x` by `pad` on each side.
pub fn pad_images(x: &Mat, h: usize, w: usize, pad: usize) -> Mat {
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = Mat::zeros(x.rows(), hp * wp);
    for s in 0..x.rows() {
        let src = x.row_slice(s);
        let dst = &mut out.data_mut()[s * hp * wp..(s + 1) * hp * wp];
        for i in 0..h {
            dst[(i + pad) * wp + pad..(i + pad) * wp + pad + w].copy_from_slice(&src[i * w..(i + 1) * w]);
        }
    }
    out
}

/// MNIST-style dataset from the bytes of an IDX image file and label file.
///
/// Pixels are divided by 255 and each digit gets a border of [`MNIST_PAD`]
/// zeros, so 28×28 digits become 32×32 single-channel images.
pub fn mnist_from_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let (n, r, c, px) = parse_idx_images(images)?;
    let lab = parse_idx_labels(labels)?;
    if lab.len() != n {
        return Err(Error::CountMismatch { images: n, labels: lab.len() });
    }
    let raw = Mat::from_vec(n, r * c, px.iter().map(|&p| p as f64 / 255.0).collect());
    let inputs = pad_images(&raw, r, c, MNIST_PAD);
    let shape = Shape::Image { h: r + 2 * MNIST_PAD, w: c + 2 * MNIST_PAD, c: 1 };
    let mut ds = Dataset::new(inputs, Targets::Labels(lab.into_iter().map(usize::from).collect()), shape)?;
    ds.norm = Normalization { divisor: 255.0, pad: MNIST_PAD };
    Ok(ds)
}

/// `n` samples with x uniform in [−π/2, π/2] and y = cos(x).
pub fn cosine_dataset(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidSpec("cosine_dataset needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-FRAC_PI_2..=FRAC_PI_2)).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x.cos()).collect();
    Dataset::new(Mat::column(&xs), Targets::Values(Mat::column(&ys)), Shape::Vector(1))
}

/// One mini-batch cut from a [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub inputs: Mat,
    pub targets: Targets,
}

pub struct Batches<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    size: usize,
    pos: usize,
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(Batch {
            inputs: select_rows(&self.ds.inputs, &indices),
            targets: self.ds.targets.select(&indices),
            indices,
        })
    }
}

/// Shuffled mini-batches (Fisher–Yates with a seeded generator), last partial
/// batch included. `seed = None` keeps the stored order.
pub fn batches(ds: &Dataset, size: usize, seed: Option<u64>) -> Result<Batches<'_>> {
    if size == 0 {
        return Err(Error::InvalidSpec("batch size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    if let Some(s) = seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
    }
    Ok(Batches { ds, order, size, pos: 0 })
}

/// Evenly spaced grid on [−π/2, π/2], handy for plotting a fitted cosine.
pub fn cosine_grid(n: usize) -> Mat {
    if n < 2 {
        return Mat::column(&vec![0.0; n]);
    }
    Mat::from_fn(n, 1, |i, _| -FRAC_PI_2 + core::f64::consts::PI * i as f64 / (n - 1) as f64)
}

#[cfg(test)]
mod tests;
