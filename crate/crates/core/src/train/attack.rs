#[allow(unused_imports)]
use num_traits::Float;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::nn::PlainNetwork;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgdConfig {
    pub eps: f64,
    pub steps: usize,
    pub step_size: f64,
}

impl PgdConfig {
    /// 10 steps of size `2.5·ε/10`.
    pub fn new(eps: f64) -> Self {
        PgdConfig { eps, steps: 10, step_size: 2.5 * eps / 10.0 }
    }
}

fn row_norm(m: &Mat, i: usize) -> f64 {
    m.row_slice(i).iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// ℓ2 projected gradient ascent on the cross-entropy, one ball per sample.
///
/// Each step moves every row of the perturbation along its own normalized
/// gradient and projects it back onto the ε-ball.
pub fn pgd_attack(net: &PlainNetwork, x: &Mat, labels: &[usize], cfg: PgdConfig) -> Result<Mat> {
    if !(cfg.eps >= 0.0) {
        return Err(Error::InvalidSpec(alloc::format!("attack radius must be non-negative, got {}", cfg.eps)));
    }
    if cfg.eps == 0.0 || cfg.steps == 0 {
        return Ok(x.clone());
    }
    let (n, d) = x.shape();
    let mut delta = Mat::zeros(n, d);
    for _ in 0..cfg.steps {
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let dv = t.leaf(delta.clone());
        let xa = t.add(xv, dv)?;
        let out = net.forward_tape(&mut t, xa)?;
        let loss = t.softmax_cross_entropy(out, labels)?;
        let g = t.backward(loss)?.get(dv);
        for i in 0..n {
            let gn = row_norm(&g, i);
            if gn > 0.0 {
                for j in 0..d {
                    delta[(i, j)] += cfg.step_size * g[(i, j)] / gn;
                }
            }
            let dn = row_norm(&delta, i);
            if dn > cfg.eps {
                let s = cfg.eps / dn;
                for j in 0..d {
                    delta[(i, j)] *= s;
                }
            }
        }
    }
    x.add(&delta)
}
