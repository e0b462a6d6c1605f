use alloc::vec::Vec;

use crate::error::Result;
use crate::linalg::Mat;

use super::{Tape, Var};

/// Outcome of comparing reverse-mode gradients against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub coords: usize,
    pub pass: bool,
}

/// Compares the tape gradient of `f` at `point` with central differences.
///
/// The per-coordinate error is `|g − d| / max(|g|, |d|, floor)` where the
/// floor is `1e-3·max(1, max_k |g_k|)`, which keeps coordinates whose
/// gradient is at round-off level from dominating the report.
pub fn grad_check<F>(f: F, point: &[Mat], step: f64, tol: f64) -> Result<GradReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |pt: &[Mat]| -> Result<f64> {
        let mut t = Tape::new();
        let vars: Vec<Var> = pt.iter().map(|m| t.leaf(m.clone())).collect();
        let out = f(&mut t, &vars)?;
        Ok(t.scalar(out))
    };
    let mut t = Tape::new();
    let vars: Vec<Var> = point.iter().map(|m| t.leaf(m.clone())).collect();
    let out = f(&mut t, &vars)?;
    let grads = t.backward(out)?;
    let analytic: Vec<Mat> = vars.iter().map(|&v| grads.get(v)).collect();
    let gmax = analytic.iter().map(Mat::max_abs).fold(0.0, f64::max);
    let floor = 1e-3 * gmax.max(1.0);

    let mut work: Vec<Mat> = point.to_vec();
    let (mut max_rel, mut max_abs, mut coords) = (0.0f64, 0.0f64, 0);
    for p in 0..point.len() {
        for k in 0..point[p].len() {
            let x0 = point[p].data()[k];
            work[p].data_mut()[k] = x0 + step;
            let fp = eval(&work)?;
            work[p].data_mut()[k] = x0 - step;
            let fm = eval(&work)?;
            work[p].data_mut()[k] = x0;
            let fd = (fp - fm) / (2.0 * step);
            let g = analytic[p].data()[k];
            let abs = (g - fd).abs();
            let rel = abs / g.abs().max(fd.abs()).max(floor);
            max_rel = max_rel.max(rel);
            max_abs = max_abs.max(abs);
            coords += 1;
        }
    }
    Ok(GradReport { max_rel_err: max_rel, max_abs_err: max_abs, coords, pass: max_rel <= tol })
}
