use alloc::format;

use crate::error::{shape_err, Result};
use crate::linalg::{inverse_psd, Mat};
use crate::statespace::{Roesser1D, Roesser2D};

/// A linear state-space map `x⁺ = Ax + Bu`, `y = Cx + Du` in its stacked form.
pub trait Realization {
    fn abcd(&self) -> (Mat, Mat, Mat, Mat);
}

impl Realization for Roesser1D {
    fn abcd(&self) -> (Mat, Mat, Mat, Mat) {
        (self.a.clone(), self.b.clone(), self.c.clone(), self.d.clone())
    }
}

impl Realization for Roesser2D {
    fn abcd(&self) -> (Mat, Mat, Mat, Mat) {
        let (n1, n2) = (self.a11.rows(), self.a22.rows());
        let mut a = Mat::zeros(n1 + n2, n1 + n2);
        a.set_block(0, 0, &self.a11);
        a.set_block(0, n1, &self.a12);
        a.set_block(n1, 0, &self.a21);
        a.set_block(n1, n1, &self.a22);
        let mut b = Mat::zeros(n1 + n2, self.c_in);
        b.set_block(0, 0, &self.b1);
        b.set_block(n1, 0, &self.b2);
        let mut c = Mat::zeros(self.c_out, n1 + n2);
        c.set_block(0, 0, &self.c1);
        c.set_block(0, n1, &self.c2);
        (a, b, c, self.d.clone())
    }
}

fn check_sq(op: &'static str, name: &str, m: &Mat, n: usize) -> Result<()> {
    if m.rows() != n || m.cols() != n {
        return Err(shape_err(op, format!("{name} is {}x{}, expected {n}x{n}", m.rows(), m.cols())));
    }
    Ok(())
}

fn check_len(op: &'static str, lambda: &[f64], n: usize) -> Result<()> {
    if lambda.len() != n {
        return Err(shape_err(op, format!("Λ has {} entries, expected {n}", lambda.len())));
    }
    Ok(())
}

/// Dissipation LMI of a convolution with optional pooling gain `ρ_p`:
///
/// `[[P−AᵀPA, −AᵀPB, −CᵀΛ], [−BᵀPA, X₋−BᵀPB, −DᵀΛ], [−ΛC, −ΛD, 2Λ−ρ_p²X]]`.
pub fn lmi_conv(real: &dyn Realization, p: &Mat, lambda: &[f64], xm: &Mat, x: &Mat, rho_pool: f64) -> Result<Mat> {
    let (a, b, c, d) = real.abcd();
    let (n, ci, co) = (a.rows(), b.cols(), c.rows());
    check_sq("lmi_conv", "P", p, n)?;
    check_sq("lmi_conv", "X₋", xm, ci)?;
    check_sq("lmi_conv", "X", x, co)?;
    check_len("lmi_conv", lambda, co)?;
    let mut g = Mat::zeros(n, n + ci);
    g.set_block(0, 0, &a);
    g.set_block(0, n, &b);
    let mut top = Mat::blkdiag(&[p, xm]);
    top.axpy(-1.0, &g.tmul(&p.mul_unchecked(&g)));
    // Λ [C D]
    let mut lcd = Mat::zeros(co, n + ci);
    lcd.set_block(0, 0, &c);
    lcd.set_block(0, n, &d);
    for i in 0..co {
        for j in 0..n + ci {
            lcd[(i, j)] *= -lambda[i];
        }
    }
    let mut br = x.scale(-rho_pool * rho_pool);
    for (i, &l) in lambda.iter().enumerate() {
        br[(i, i)] += 2.0 * l;
    }
    let m = n + ci + co;
    let mut out = Mat::zeros(m, m);
    out.set_block(0, 0, &top);
    out.set_block(n + ci, 0, &lcd);
    out.set_block(0, n + ci, &lcd.transpose());
    out.set_block(n + ci, n + ci, &br);
    Ok(out.symmetrized())
}

fn expand(xm: &Mat, rep: Option<usize>) -> Mat {
    match rep {
        Some(k) if k > 1 => xm.kron_eye(k),
        _ => xm.clone(),
    }
}

/// `[[X̃₋, −WᵀΛ], [−ΛW, 2Λ−X]]` with `X̃₋ = I_N ⊗ X₋` when `expand` is set.
pub fn lmi_fc(w: &Mat, lambda: &[f64], xm: &Mat, x: &Mat, rep: Option<usize>) -> Result<Mat> {
    let xt = expand(xm, rep);
    let (co, ci) = w.shape();
    check_sq("lmi_fc", "X̃₋", &xt, ci)?;
    check_sq("lmi_fc", "X", x, co)?;
    check_len("lmi_fc", lambda, co)?;
    let mut lw = w.clone();
    for i in 0..co {
        for j in 0..ci {
            lw[(i, j)] *= -lambda[i];
        }
    }
    let mut br = x.scale(-1.0);
    for (i, &l) in lambda.iter().enumerate() {
        br[(i, i)] += 2.0 * l;
    }
    let mut out = Mat::zeros(ci + co, ci + co);
    out.set_block(0, 0, &xt);
    out.set_block(ci, 0, &lw);
    out.set_block(0, ci, &lw.transpose());
    out.set_block(ci, ci, &br);
    Ok(out.symmetrized())
}

/// `W (I_N ⊗ X₋⁻¹) Wᵀ` without forming the Kronecker product.
fn w_xinv_wt(w: &Mat, xm: &Mat, rep: usize) -> Result<Mat> {
    let xi = inverse_psd(xm)?;
    let k = xm.rows();
    let (co, ci) = w.shape();
    if ci != rep * k {
        return Err(shape_err("lmi_reduced", format!("W has {ci} columns, expected {rep}x{k}")));
    }
    let mut out = Mat::zeros(co, co);
    for blk in 0..rep {
        let wb = w.block(0, blk * k, co, k);
        out.add_assign(&wb.mul_unchecked(&xi).mult(&wb));
    }
    Ok(out)
}

/// Schur complement of [`lmi_fc`] with respect to its PD block `X̃₋`:
/// `(2Λ−X) − ΛW X̃₋⁻¹ WᵀΛ`, PSD exactly when the full LMI is.
pub fn lmi_fc_reduced(w: &Mat, lambda: &[f64], xm: &Mat, x: &Mat, rep: usize) -> Result<Mat> {
    let co = w.rows();
    check_sq("lmi_fc_reduced", "X", x, co)?;
    check_len("lmi_fc_reduced", lambda, co)?;
    let core = w_xinv_wt(w, xm, rep)?;
    let mut out = x.scale(-1.0);
    for i in 0..co {
        out[(i, i)] += 2.0 * lambda[i];
        for j in 0..co {
            out[(i, j)] -= lambda[i] * core[(i, j)] * lambda[j];
        }
    }
    Ok(out.symmetrized())
}

/// `X̃₋ − WᵀQW`.
pub fn lmi_last(w: &Mat, xm: &Mat, q: &Mat, rep: Option<usize>) -> Result<Mat> {
    let xt = expand(xm, rep);
    let (co, ci) = w.shape();
    check_sq("lmi_last", "X̃₋", &xt, ci)?;
    check_sq("lmi_last", "Q", q, co)?;
    let wqw = w.tmul(&q.mul_unchecked(w));
    Ok(xt.sub(&wqw)?.symmetrized())
}

/// `I − L_Q W X̃₋⁻¹ Wᵀ L_Qᵀ`, PSD exactly when [`lmi_last`] is.
pub fn lmi_last_reduced(w: &Mat, xm: &Mat, lq: &Mat, rep: usize) -> Result<Mat> {
    let co = w.rows();
    check_sq("lmi_last_reduced", "L_Q", lq, co)?;
    let core = w_xinv_wt(w, xm, rep)?;
    let m = lq.mul_unchecked(&core).mult(lq);
    Ok(Mat::identity(co).sub(&m)?.symmetrized())
}

/// Relative tolerance used when none is given.
pub const DEFAULT_TOL: f64 = 1e-8;

/// `min eig(m) ≥ −tol·max(1, ‖m‖_F)`.
pub fn passes(min_eig: f64, norm: f64, tol: f64) -> bool {
    min_eig >= -tol * norm.max(1.0)
}
