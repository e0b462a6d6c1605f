#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::PoolKind;
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, Mat};

/// `logit[label] − max_{j≠label} logit[j]` per row; positive iff correctly classified.
pub fn margins(logits: &Mat, labels: &[usize]) -> Vec<f64> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let row = logits.row_slice(i);
            let other = row.iter().enumerate().filter(|&(j, _)| j != y).map(|(_, &v)| v).fold(f64::NEG_INFINITY, f64::max);
            row[y] - other
        })
        .collect()
}

/// Fraction of samples whose margin exceeds `√2·ρ·ε`.
///
/// A margin above that threshold cannot be overturned by any perturbation of
/// ℓ2 norm at most `ε` when the network is `ρ`-Lipschitz.
pub fn certified_accuracy(margins: &[f64], rho: f64, eps: f64) -> f64 {
    if margins.is_empty() {
        return 0.0;
    }
    let thr = core::f64::consts::SQRT_2 * rho * eps;
    margins.iter().filter(|&&m| m > thr && m > 0.0).count() as f64 / margins.len() as f64
}

/// Lipschitz constant of a pooling layer on an `h×w` input.
///
/// Average pooling uses the operator norm of the explicit linear map, max
/// pooling the square root of the largest number of windows sharing a pixel.
pub fn pooling_gain(kind: PoolKind, window: (usize, usize), stride: (usize, usize), size: (usize, usize)) -> Result<f64> {
    let (k1, k2) = window;
    let (s1, s2) = stride;
    let (h, w) = size;
    if k1 == 0 || k2 == 0 || s1 == 0 || s2 == 0 || s1 > k1 || s2 > k2 || h < k1 || w < k2 {
        return Err(Error::InvalidGeometry(format!("window {window:?}, stride {stride:?} on {h}x{w}")));
    }
    let (ho, wo) = ((h - k1) / s1 + 1, (w - k2) / s2 + 1);
    match kind {
        PoolKind::Max => {
            let mut count = vec![0usize; h * w];
            for i in 0..ho {
                for j in 0..wo {
                    for a in 0..k1 {
                        for b in 0..k2 {
                            count[(i * s1 + a) * w + j * s2 + b] += 1;
                        }
                    }
                }
            }
            Ok((*count.iter().max().unwrap_or(&1) as f64).sqrt())
        }
        PoolKind::Average => {
            let inv = 1.0 / (k1 * k2) as f64;
            let mut op = Mat::zeros(ho * wo, h * w);
            for i in 0..ho {
                for j in 0..wo {
                    for a in 0..k1 {
                        for b in 0..k2 {
                            op[(i * wo + j, (i * s1 + a) * w + j * s2 + b)] += inv;
                        }
                    }
                }
            }
            Ok(spectral_norm(&op))
        }
    }
}
