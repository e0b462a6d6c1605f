use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::layers::{kron_eye_tape, roesser_ab_tape, Dims2d, Gain, LayerKind, TapeLayer};
use crate::linalg::Mat;
use crate::statespace::roesser::{last_block_injector, last_block_selector, shift_up};

fn metric(t: &mut Tape, g: Gain) -> Result<Var> {
    let lt = t.transpose(g.l);
    t.matmul(lt, g.l)
}

fn symmetrize(t: &mut Tape, m: Var) -> Result<Var> {
    let mt = t.transpose(m);
    let s = t.add(m, mt)?;
    Ok(t.scale(s, 0.5))
}

fn two_lambda_minus(t: &mut Tape, lambda: Var, x: Var, s: f64) -> Result<Var> {
    let l = t.diag(lambda)?;
    let l2 = t.scale(l, 2.0);
    let xs = t.scale(x, s);
    t.sub(l2, xs)
}

/// The layer's dissipation LMI assembled on the tape, in its full form.
///
/// Same matrix as [`super::layer_lmi`] without the Schur reduction, so
/// every entry is differentiable with respect to the free variables.
pub fn lmi_tape(t: &mut Tape, layer: &TapeLayer, lq: Option<&Mat>) -> Result<Var> {
    let xm = metric(t, layer.gain_in)?;
    let xt = kron_eye_tape(t, xm, layer.rep)?;
    let w = layer.weight;
    let no_gain = || Error::Shape(alloc::format!("{} layer without outgoing gain", layer.kind.name()));
    let d = layer.dims;
    match layer.kind {
        LayerKind::LastFc => {
            let q = match lq {
                Some(l) => t.constant(l.tmul(l)),
                None => t.constant(Mat::identity(w.rows())),
            };
            let wt = t.transpose(w);
            let qw = t.matmul(q, w)?;
            let wqw = t.matmul(wt, qw)?;
            let m = t.sub(xt, wqw)?;
            symmetrize(t, m)
        }
        LayerKind::Fc => {
            let x = metric(t, layer.gain.ok_or_else(no_gain)?)?;
            let lam = layer.lambda.ok_or_else(no_gain)?;
            let l = t.diag(lam)?;
            let lw = t.matmul(l, w)?;
            let lw = t.scale(lw, -1.0);
            let lwt = t.transpose(lw);
            let br = two_lambda_minus(t, lam, x, 1.0)?;
            let (co, ci) = w.shape();
            let m = t.assemble(ci + co, ci + co, &[(0, 0, xt), (ci, 0, lw), (0, ci, lwt), (ci, ci, br)])?;
            symmetrize(t, m)
        }
        LayerKind::Conv1d | LayerKind::Conv1dMax | LayerKind::Conv2d | LayerKind::Conv2dMax => {
            let x = metric(t, layer.gain.ok_or_else(no_gain)?)?;
            let lam = layer.lambda.ok_or_else(no_gain)?;
            let (a, b, cd, p) = if matches!(layer.kind, LayerKind::Conv1d | LayerKind::Conv1dMax) {
                let a = t.constant(shift_up(d.r1, d.c_in));
                let b = t.constant(last_block_injector(d.r1, d.c_in));
                // the weight is already [C D]
                (a, b, w, *layer.p.first().ok_or_else(no_gain)?)
            } else {
                let dims = Dims2d { c: d.c, c_in: d.c_in, r1: d.r1, r2: d.r2 };
                let (n1, n2) = (dims.n1(), dims.n2());
                let a12 = t.block(w, 0, 0, n1, n2)?;
                let b1 = t.block(w, 0, n2, n1, d.c_in)?;
                let (a, b) = roesser_ab_tape(t, a12, b1, dims)?;
                let c1 = t.constant(last_block_selector(d.r1, d.c));
                let c2 = t.block(w, n1, 0, d.c, n2)?;
                let dd = t.block(w, n1, n2, d.c, d.c_in)?;
                let cd = t.assemble(d.c, n1 + n2 + d.c_in, &[(0, 0, c1), (0, n1, c2), (0, n1 + n2, dd)])?;
                if layer.p.len() != 2 {
                    return Err(Error::Shape("conv2d layer needs P1 and P2".into()));
                }
                let (p1, p2) = (layer.p[0], layer.p[1]);
                let p = t.assemble(n1 + n2, n1 + n2, &[(0, 0, p1), (n1, n1, p2)])?;
                (a, b, cd, p)
            };
            let n = a.rows();
            let ci = b.cols();
            let co = cd.rows();
            let g = t.hstack(&[a, b])?;
            let pg = t.matmul(p, g)?;
            let gt = t.transpose(g);
            let gpg = t.matmul(gt, pg)?;
            let diag = t.assemble(n + ci, n + ci, &[(0, 0, p), (n, n, xt)])?;
            let top = t.sub(diag, gpg)?;
            let l = t.diag(lam)?;
            let lcd = t.matmul(l, cd)?;
            let lcd = t.scale(lcd, -1.0);
            let lcdt = t.transpose(lcd);
            let br = two_lambda_minus(t, lam, x, layer.rho_pool * layer.rho_pool)?;
            let m = n + ci + co;
            let out = t.assemble(m, m, &[(0, 0, top), (n + ci, 0, lcd), (0, n + ci, lcdt), (n + ci, n + ci, br)])?;
            symmetrize(t, out)
        }
    }
}

/// `Σ_k ‖M_k‖²_F / dim(M_k)` over the LMIs of `layers`.
///
/// A differentiable summary of how far each layer sits from the boundary
/// of its feasible set; adding it to a task loss gives the regularized
/// objective used in gradient checks.
pub fn lmi_penalty(t: &mut Tape, layers: &[TapeLayer], lq: Option<&Mat>) -> Result<Var> {
    let mut terms: Vec<Var> = Vec::with_capacity(layers.len());
    for l in layers {
        let m = lmi_tape(t, l, lq)?;
        let sq = t.square(m);
        let s = t.sum(sq);
        terms.push(t.scale(s, 1.0 / m.rows().max(1) as f64));
    }
    let mut acc = t.constant(Mat::zeros(1, 1));
    for v in terms {
        acc = t.add(acc, v)?;
    }
    Ok(acc)
}
