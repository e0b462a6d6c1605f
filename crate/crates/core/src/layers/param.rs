#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::cayley::{cayley_semi_tape, cayley_tape};
use super::gramian::{build_f_tape, gram_eps, gramian_1d_tape, gramian_2d_tape, kron_eye_tape, Dims2d};
use super::params::*;
use crate::autodiff::{Tape, Var};
use crate::error::{shape_err, Result};
use crate::linalg::Mat;
use crate::statespace::roesser::{last_block_injector, last_block_selector, shift_down, shift_up};
use crate::statespace::{Roesser1D, Roesser2D};

const SQRT_2: f64 = core::f64::consts::SQRT_2;

/// Gain factor `L` of a signal metric `X = LᵀL`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainFactor {
    pub l: Mat,
    pub diagonal: bool,
}

impl GainFactor {
    pub fn new(l: Mat) -> Self {
        let diagonal = l.is_diagonal();
        GainFactor { l, diagonal }
    }

    /// `ρ·I`, the factor of `R = ρ²I`.
    pub fn scaled_identity(n: usize, rho: f64) -> Self {
        GainFactor { l: Mat::identity(n).scale(rho), diagonal: true }
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn metric(&self) -> Mat {
        self.l.tmul(&self.l)
    }
}

/// A gain factor living on a tape.
#[derive(Debug, Clone, Copy)]
pub struct Gain {
    pub l: Var,
    pub diagonal: bool,
}

impl Gain {
    pub fn constant(t: &mut Tape, g: &GainFactor) -> Self {
        Gain { l: t.constant(g.l.clone()), diagonal: g.diagonal }
    }

    pub fn value(&self, t: &Tape) -> GainFactor {
        GainFactor { l: t.value(self.l).clone(), diagonal: self.diagonal }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Fc,
    LastFc,
    Conv1d,
    Conv1dMax,
    Conv2d,
    Conv2dMax,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Fc => "fc",
            LayerKind::LastFc => "fc-last",
            LayerKind::Conv1d => "conv1d",
            LayerKind::Conv1dMax => "conv1d-max",
            LayerKind::Conv2d => "conv2d",
            LayerKind::Conv2dMax => "conv2d-max",
        }
    }
}

/// Shape information needed to rebuild a realization from its free blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerDims {
    pub c: usize,
    pub c_in: usize,
    pub r1: usize,
    pub r2: usize,
}

/// Result of a parameterization on a tape.
#[derive(Debug, Clone)]
pub struct TapeLayer {
    pub kind: LayerKind,
    /// FC: `W`. 1-D conv: `[C D]`. 2-D conv: `[A12 B1; C2 D]`.
    pub weight: Var,
    pub bias: Var,
    pub gain_in: Gain,
    /// The incoming metric is `I_rep ⊗ X₋`.
    pub rep: usize,
    pub gain: Option<Gain>,
    pub lambda: Option<Var>,
    pub p: Vec<Var>,
    pub rho_pool: f64,
    pub dims: LayerDims,
}

fn check_in(op: &'static str, expected: usize, gin: Gain, rep: usize) -> Result<()> {
    if expected != rep * gin.l.rows() || gin.l.rows() != gin.l.cols() {
        return Err(shape_err(
            op,
            format!("input dim {expected} vs {rep} x {}x{} gain", gin.l.rows(), gin.l.cols()),
        ));
    }
    Ok(())
}

/// `m · (I_rep ⊗ l)` through a reshape instead of the dense Kronecker product.
fn right_kron_mul(t: &mut Tape, m: Var, l: Var, rep: usize) -> Result<Var> {
    if rep == 1 {
        return t.matmul(m, l);
    }
    let (r, k) = (m.rows(), l.rows());
    let a = t.reshape(m, r * rep, k)?;
    let b = t.matmul(a, l)?;
    t.reshape(b, r, rep * k)
}

/// `(X₋, X₋⁻¹)`, both expanded by `I_rep ⊗`.
fn metric_pair(t: &mut Tape, gin: Gain, rep: usize) -> Result<(Var, Var)> {
    let lt = t.transpose(gin.l);
    let x0 = t.matmul(lt, gin.l)?;
    let xi0 = t.inverse_psd(x0)?;
    Ok((kron_eye_tape(t, x0, rep)?, kron_eye_tape(t, xi0, rep)?))
}

/// Activated fully connected layer: `W = √2 Γ⁻¹ Vᵀ L₋`, `L = √2 U Γ`, `Λ = Γ²`.
pub fn param_fc_tape(t: &mut Tape, v: &FcVars, gin: Gain, rep: usize) -> Result<TapeLayer> {
    let c = v.y.rows();
    check_in("param_fc", v.z.rows(), gin, rep)?;
    let gamma = t.exp(v.gamma_log);
    let (u, vv) = cayley_tape(t, v.y, v.z)?;
    let vt = t.transpose(vv);
    let vtl = right_kron_mul(t, vt, gin.l, rep)?;
    let ginv = t.recip(gamma);
    let w0 = t.row_scale(ginv, vtl)?;
    let w = t.scale(w0, SQRT_2);
    let ug = t.col_scale(u, gamma)?;
    let l = t.scale(ug, SQRT_2);
    let lambda = t.square(gamma);
    Ok(TapeLayer {
        kind: LayerKind::Fc,
        weight: w,
        bias: v.bias,
        gain_in: gin,
        rep,
        gain: Some(Gain { l, diagonal: false }),
        lambda: Some(lambda),
        p: Vec::new(),
        rho_pool: 1.0,
        dims: LayerDims { c, c_in: v.z.rows(), r1: 0, r2: 0 },
    })
}

/// Affine output layer: `W = L_Q⁻¹ Vᵀ L₋`.
pub fn param_last_fc_tape(t: &mut Tape, v: &LastFcVars, gin: Gain, rep: usize, lq: Option<&Mat>) -> Result<TapeLayer> {
    let c = v.y.rows();
    check_in("param_last_fc", v.z.rows(), gin, rep)?;
    let (_, vv) = cayley_tape(t, v.y, v.z)?;
    let vt = t.transpose(vv);
    let mut w = right_kron_mul(t, vt, gin.l, rep)?;
    if let Some(lq) = lq {
        let lqv = t.constant(lq.clone());
        w = t.solve(lqv, w)?;
    }
    Ok(TapeLayer {
        kind: LayerKind::LastFc,
        weight: w,
        bias: v.bias,
        gain_in: gin,
        rep,
        gain: None,
        lambda: None,
        p: Vec::new(),
        rho_pool: 1.0,
        dims: LayerDims { c, c_in: v.z.rows(), r1: 0, r2: 0 },
    })
}

/// The exchange matrix `J`, ones on the anti-diagonal.
fn exchange(n: usize) -> Mat {
    Mat::from_fn(n, n, |i, j| if i + j + 1 == n { 1.0 } else { 0.0 })
}

/// Upper Cholesky factor of `phi⁻¹` computed from `phi` alone.
///
/// With `J phi J = L̃ᵀL̃`, the factor is `(J L̃ J)⁻ᵀ`, which is upper triangular.
fn chol_of_inverse(t: &mut Tape, phi: Var) -> Result<Var> {
    let n = phi.rows();
    let j = t.constant(exchange(n));
    let jp = t.matmul(j, phi)?;
    let jpj = t.matmul(jp, j)?;
    let lt = t.cholesky(jpj)?;
    let jl = t.matmul(j, lt)?;
    let lw = t.matmul(jl, j)?;
    let lwt = t.transpose(lw);
    let eye = t.constant(Mat::identity(n));
    let inv = t.solve(lwt, eye)?;
    Ok(inv)
}

/// `Rᵀ N⁻¹ R` for symmetric positive definite `N`.
fn quad_inv(t: &mut Tape, n: Var, r: Var) -> Result<Var> {
    let nr = t.solve_psd(n, r)?;
    let rt = t.transpose(r);
    t.matmul(rt, nr)
}

/// One Newton step taking an upper factor `k` of `phi⁻¹` closer to `chol(f)`,
/// where `f = phi⁻¹` is also available in direct form.
///
/// With `Δ = k⁻ᵀ (f − kᵀk) k⁻¹` the full step is `k + triu½(Δ) k`, where
/// `triu½` keeps the strict upper triangle and half the diagonal. `f` is
/// accurate along its large eigenvalues and `phi` along the small ones, so
/// the block of `Δ` on the small eigenvalues is dropped:
/// `Δ ← ΩΔ + ΔΩ − ΩΔΩ` with `Ω = k A (A² + τ²I)⁻¹ kᵀ`, `A = kᵀk` and `τ`
/// near the geometric mean of the two ends of the spectrum. The value is
/// unchanged in exact arithmetic. When the spread exceeds what the filter
/// can resolve the factor is returned as is.
fn refine_factor(t: &mut Tape, k: Var, f: Var, phi: Var) -> Result<Var> {
    let n = k.rows();
    let (tr_f, tr_phi) = (t.value(f).trace().abs(), t.value(phi).trace().abs());
    if !(tr_f * tr_phi < 1e14) {
        return Ok(k);
    }
    let tau = (tr_f / tr_phi).sqrt();
    let kt = t.transpose(k);
    let ktk = t.matmul(kt, k)?;
    let r = t.sub(f, ktk)?;
    let y = t.solve(kt, r)?;
    let yt = t.transpose(y);
    let delta = t.solve(kt, yt)?;
    let a2 = t.matmul(ktk, ktk)?;
    let shift = t.constant(Mat::identity(n).scale(tau * tau));
    let reg = t.add(a2, shift)?;
    let rk = t.solve_psd(reg, kt)?;
    let ark = t.matmul(ktk, rk)?;
    let omega = t.matmul(k, ark)?;
    let od = t.matmul(omega, delta)?;
    let dom = t.matmul(delta, omega)?;
    let odo = t.matmul(od, omega)?;
    let both = t.add(od, dom)?;
    let filtered = t.sub(both, odo)?;
    let mask = t.constant(Mat::from_fn(n, n, |i, j| match i.cmp(&j) {
        core::cmp::Ordering::Less => 1.0,
        core::cmp::Ordering::Equal => 0.5,
        core::cmp::Ordering::Greater => 0.0,
    }));
    let u = t.hadamard(filtered, mask)?;
    let uk = t.matmul(u, k)?;
    t.add(k, uk)
}

/// `P = T⁻¹` and `L_F = chol(F)` for the 1-D shift realization.
///
/// `F = blkdiag(P, X₋) − [A B]ᵀ P [A B]` is never formed. Its inverse is
/// `blkdiag(T, X₋⁻¹) + Rᵀ (HᵀH + εI)⁻¹ R` with `R = [A T, B X₋⁻¹]`, a sum
/// of positive semidefinite terms.
fn conv1d_front(t: &mut Tape, h: Var, gin: Gain, rep: usize, c_in: usize, r: usize, eps: f64) -> Result<(Var, Var)> {
    let (xm, xinv) = metric_pair(t, gin, rep)?;
    let tt = gramian_1d_tape(t, xinv, h, eps, r, c_in)?;
    let p = t.inverse_psd(tt)?;
    let n = tt.rows();
    let a = t.constant(shift_up(r, c_in));
    let b = t.constant(last_block_injector(r, c_in));
    let at = t.matmul(a, tt)?;
    let bx = t.matmul(b, xinv)?;
    let rr = t.hstack(&[at, bx])?;
    let m = gram_eps(t, h, eps)?;
    let q = quad_inv(t, m, rr)?;
    let w = t.assemble(n + c_in, n + c_in, &[(0, 0, tt), (n, n, xinv)])?;
    let phi = t.add(w, q)?;
    let lf = chol_of_inverse(t, phi)?;
    let f = build_f_tape(t, a, b, p, xm)?;
    let lf = refine_factor(t, lf, f, phi)?;
    Ok((p, lf))
}

fn conv1d_order(op: &'static str, rows: usize, c_in: usize) -> Result<usize> {
    if c_in == 0 || rows % c_in != 0 || rows < c_in {
        return Err(shape_err(op, format!("{rows} rows do not hold whole {c_in}-channel blocks")));
    }
    Ok(rows / c_in - 1)
}

/// 1-D convolution: `[C D] = √2 Γ⁻¹ Vᵀ L_F`, `L = √2 U Γ / ρ_p`, `Λ = Γ²`.
pub fn param_conv1d_tape(t: &mut Tape, v: &Conv1dVars, gin: Gain, rep: usize, rho_pool: f64, eps: f64) -> Result<TapeLayer> {
    let c = v.y.rows();
    let c_in = rep * gin.l.rows();
    let r = conv1d_order("param_conv1d", v.z.rows(), c_in)?;
    let (p, lf) = conv1d_front(t, v.h, gin, rep, c_in, r, eps)?;
    let gamma = t.exp(v.gamma_log);
    let (u, vv) = cayley_tape(t, v.y, v.z)?;
    let vt = t.transpose(vv);
    let vl = t.matmul(vt, lf)?;
    let ginv = t.recip(gamma);
    let ch0 = t.row_scale(ginv, vl)?;
    let ch = t.scale(ch0, SQRT_2);
    let ug = t.col_scale(u, gamma)?;
    let l = t.scale(ug, SQRT_2 / rho_pool);
    let lambda = t.square(gamma);
    Ok(TapeLayer {
        kind: LayerKind::Conv1d,
        weight: ch,
        bias: v.bias,
        gain_in: gin,
        rep,
        gain: Some(Gain { l, diagonal: false }),
        lambda: Some(lambda),
        p: vec![p],
        rho_pool,
        dims: LayerDims { c, c_in, r1: r, r2: 0 },
    })
}

/// 1-D convolution with max pooling: `Λ = ½(Γ̃² + ρ_p² X)`, `[C D] = Λ⁻¹ Γ̃ Ũᵀ L_F`, `L = diag(l)`.
pub fn param_conv1d_max_tape(t: &mut Tape, v: &Conv1dMaxVars, gin: Gain, rep: usize, rho_pool: f64, eps: f64) -> Result<TapeLayer> {
    let c = v.yt.cols();
    let c_in = rep * gin.l.rows();
    let r = conv1d_order("param_conv1d_max", v.yt.rows(), c_in)?;
    let (p, lf) = conv1d_front(t, v.h, gin, rep, c_in, r, eps)?;
    let ut = cayley_semi_tape(t, v.yt)?;
    let l = t.exp(v.l_log);
    let g2 = t.square(v.gamma_t);
    let l2 = t.square(l);
    let l2r = t.scale(l2, rho_pool * rho_pool);
    let s = t.add(g2, l2r)?;
    let lambda = t.scale(s, 0.5);
    let linv = t.recip(lambda);
    let coef = t.hadamard(linv, v.gamma_t)?;
    let utt = t.transpose(ut);
    let ul = t.matmul(utt, lf)?;
    let ch = t.row_scale(coef, ul)?;
    let ldiag = t.diag(l)?;
    Ok(TapeLayer {
        kind: LayerKind::Conv1dMax,
        weight: ch,
        bias: v.bias,
        gain_in: gin,
        rep,
        gain: Some(Gain { l: ldiag, diagonal: true }),
        lambda: Some(lambda),
        p: vec![p],
        rho_pool,
        dims: LayerDims { c, c_in, r1: r, r2: 0 },
    })
}

/// Shared front end of the 2-D parameterizations.
struct Conv2dFront {
    p1: Var,
    p2: Var,
    /// `C1 F1⁻¹ C1ᵀ`.
    s: Var,
    /// `C1 F1⁻¹ F12`.
    g12: Var,
    /// Factor of `F2 − F12ᵀ F1⁻¹ F12`.
    lf: Var,
}

/// Everything the 2-D parameterizations need from `F` without forming `F`.
///
/// With `m1 = T1 − A11T1A11ᵀ`, `R12 = [A12 B1]` and `R22 = [A22 B2]`:
/// `F1⁻¹ = T1 + (A11T1)ᵀ m1⁻¹ A11T1`, `F1⁻¹F12 = −T1A11ᵀ m1⁻¹ R12` and
/// `F2 − F12ᵀF1⁻¹F12 = blkdiag(P2, X₋) − R22ᵀP2R22 − R12ᵀm1⁻¹R12`.
/// The factor of the last one starts from its inverse
/// `Φ22 = blkdiag(T2, X₋⁻¹) + R̃ᵀ M⁻¹ R̃`, a sum of positive semidefinite
/// terms that stays definite however thin the margin, and is then refined
/// against the direct form.
#[allow(clippy::too_many_arguments)]
fn conv2d_front(
    t: &mut Tape,
    h1: Var,
    h2: Var,
    a12: Var,
    b1: Var,
    gin: Gain,
    rep: usize,
    d: Dims2d,
    eps: f64,
) -> Result<Conv2dFront> {
    let (n1, n2, c) = (d.n1(), d.n2(), d.c);
    let m = n2 + d.c_in;
    let (xm, xinv) = metric_pair(t, gin, rep)?;
    let g = gramian_2d_tape(t, xinv, h1, h2, a12, b1, eps, d)?;
    let p1 = t.inverse_psd(g.t1)?;
    let p2 = t.inverse_psd(g.t2)?;

    let a22 = t.constant(shift_up(d.r2, d.c_in));
    let b2 = t.constant(last_block_injector(d.r2, d.c_in));
    let r22 = t.hstack(&[a22, b2])?;
    let r22t = t.transpose(r22);
    let pr = t.matmul(p2, r22)?;
    let rpr = t.matmul(r22t, pr)?;
    let w2 = t.assemble(m, m, &[(0, 0, p2), (n2, n2, xm)])?;
    let schur = t.sub(w2, rpr)?;

    let a22t2 = t.matmul(a22, g.t2)?;
    let b2x = t.matmul(b2, xinv)?;
    let r_bot = t.hstack(&[a22t2, b2x])?;
    let w2inv = t.assemble(m, m, &[(0, 0, g.t2), (n2, n2, xinv)])?;
    let q_bot = quad_inv(t, g.sc, r_bot)?;
    let phi22 = t.add(w2inv, q_bot)?;
    if n1 == 0 {
        let lf = chol_of_inverse(t, phi22)?;
        let lf = refine_factor(t, lf, schur, phi22)?;
        return Ok(Conv2dFront {
            p1,
            p2,
            s: t.constant(Mat::zeros(c, c)),
            g12: t.constant(Mat::zeros(c, m)),
            lf,
        });
    }

    // Q2 = R_top + E Sc⁻¹ R_bot on the (x2, u) columns
    let a12t2 = t.matmul(a12, g.t2)?;
    let b1x = t.matmul(b1, xinv)?;
    let r_top = t.hstack(&[a12t2, b1x])?;
    let sr = t.solve_psd(g.sc, r_bot)?;
    let esr = t.matmul(g.e, sr)?;
    let q2 = t.add(r_top, esr)?;
    let q_top = quad_inv(t, g.n1, q2)?;
    let phi22 = t.add(phi22, q_top)?;

    let a11 = t.constant(shift_down(d.r1, c));
    let a11t1 = t.matmul(a11, g.t1)?;
    let f1inv_extra = quad_inv(t, g.m1, a11t1)?;
    let f1inv = t.add(g.t1, f1inv_extra)?;
    let s = t.block(f1inv, n1 - c, n1 - c, c, c)?;

    let r12 = t.hstack(&[a12, b1])?;
    let mr = t.solve_psd(g.m1, r12)?;
    let a11t1t = t.transpose(a11t1);
    let gfull = t.matmul(a11t1t, mr)?;
    let g_last = t.block(gfull, n1 - c, 0, c, m)?;
    let g12 = t.scale(g_last, -1.0);
    let r12t = t.transpose(r12);
    let rmr = t.matmul(r12t, mr)?;
    let schur = t.sub(schur, rmr)?;

    let lf = chol_of_inverse(t, phi22)?;
    let lf = refine_factor(t, lf, schur, phi22)?;
    Ok(Conv2dFront { p1, p2, s, g12, lf })
}

/// `(|S| q) ⊘ q` with `q = exp(q_log)`.
fn weighted_row_sums(t: &mut Tape, s: Var, q_log: Var) -> Result<Var> {
    let q = t.exp(q_log);
    let a = t.abs(s);
    let aq = t.matmul(a, q)?;
    let qi = t.recip(q);
    t.hadamard(aq, qi)
}

/// `γ = ε + δ² + ½ (|S| q) ⊘ q`, which makes `2Γ − S` diagonally dominant.
pub fn gamma_dd_tape(t: &mut Tape, s: Var, delta: Var, q_log: Var, eps: f64) -> Result<Var> {
    let w = weighted_row_sums(t, s, q_log)?;
    let hw = t.scale(w, 0.5);
    let d2 = t.square(delta);
    let g = t.add(d2, hw)?;
    Ok(t.add_scalar(g, eps))
}

pub fn gamma_dd(s: &Mat, delta: &Mat, q: &Mat, eps: f64) -> Result<Vec<f64>> {
    let mut t = Tape::new();
    let sv = t.constant(s.clone());
    let dv = t.constant(delta.clone());
    let ql = t.constant(q.map(|x| x.ln()));
    let g = gamma_dd_tape(&mut t, sv, dv, ql, eps)?;
    Ok(t.value(g).data().to_vec())
}

fn kernel_block(t: &mut Tape, a12: Var, b1: Var, c2d: Var, d: Dims2d) -> Result<Var> {
    let (n1, n2) = (d.n1(), d.n2());
    t.assemble(n1 + d.c, n2 + d.c_in, &[(0, 0, a12), (0, n2, b1), (n1, 0, c2d)])
}

fn conv2d_dims(op: &'static str, c: usize, a12: Var, b1: Var, gin: Gain, rep: usize) -> Result<Dims2d> {
    let c_in = rep * gin.l.rows();
    let n1 = b1.rows();
    let n2 = a12.cols();
    if c == 0 || c_in == 0 || n1 % c != 0 || n2 % c_in != 0 || b1.cols() != c_in || a12.rows() != n1 {
        return Err(shape_err(op, format!("A12 {:?}, B1 {:?} for c={c}, c_in={c_in}", a12.shape(), b1.shape())));
    }
    Ok(Dims2d { c, c_in, r1: n1 / c, r2: n2 / c_in })
}

/// 2-D convolution, optionally followed by average pooling with gain `ρ_p`.
///
/// `[C2 D] = C1F1⁻¹F12 − L_Γᵀ Vᵀ L_F`, `L = U L_Γ Γ⁻¹ / ρ_p`, `Λ = Γ⁻¹`.
pub fn param_conv2d_tape(t: &mut Tape, v: &Conv2dVars, gin: Gain, rep: usize, rho_pool: f64, eps: f64) -> Result<TapeLayer> {
    let c = v.y.rows();
    let d = conv2d_dims("param_conv2d", c, v.a12, v.b1, gin, rep)?;
    if v.z.rows() != d.n2() + d.c_in {
        return Err(shape_err("param_conv2d", format!("Z has {} rows, expected {}", v.z.rows(), d.n2() + d.c_in)));
    }
    let fr = conv2d_front(t, v.h1, v.h2, v.a12, v.b1, gin, rep, d, eps)?;
    let gamma = gamma_dd_tape(t, fr.s, v.delta, v.q_log, eps)?;
    let gdiag = t.diag(gamma)?;
    let two_g = t.scale(gdiag, 2.0);
    let m = t.sub(two_g, fr.s)?;
    let lg = t.cholesky(m)?;
    let (u, vv) = cayley_tape(t, v.y, v.z)?;
    let lgt = t.transpose(lg);
    let vt = t.transpose(vv);
    let x = t.matmul(lgt, vt)?;
    let x = t.matmul(x, fr.lf)?;
    let c2d = t.sub(fr.g12, x)?;
    let weight = kernel_block(t, v.a12, v.b1, c2d, d)?;
    let ul = t.matmul(u, lg)?;
    let ginv = t.recip(gamma);
    let l0 = t.col_scale(ul, ginv)?;
    let l = t.scale(l0, 1.0 / rho_pool);
    Ok(TapeLayer {
        kind: LayerKind::Conv2d,
        weight,
        bias: v.bias,
        gain_in: gin,
        rep,
        gain: Some(Gain { l, diagonal: false }),
        lambda: Some(ginv),
        p: vec![fr.p1, fr.p2],
        rho_pool,
        dims: LayerDims { c, c_in: d.c_in, r1: d.r1, r2: d.r2 },
    })
}

/// 2-D convolution followed by max pooling with gain `ρ_p`; emits a diagonal gain.
pub fn param_conv2d_max_tape(t: &mut Tape, v: &Conv2dMaxVars, gin: Gain, rep: usize, rho_pool: f64, eps: f64) -> Result<TapeLayer> {
    let c = v.yt.cols();
    let d = conv2d_dims("param_conv2d_max", c, v.a12, v.b1, gin, rep)?;
    if v.yt.rows() != d.n2() + d.c_in {
        return Err(shape_err("param_conv2d_max", format!("Ỹ has {} rows, expected {}", v.yt.rows(), d.n2() + d.c_in)));
    }
    let fr = conv2d_front(t, v.h1, v.h2, v.a12, v.b1, gin, rep, d, eps)?;
    let w = weighted_row_sums(t, fr.s, v.q_log)?;
    let d2 = t.square(v.delta);
    let eta0 = t.add(d2, w)?;
    let eta = t.add_scalar(eta0, eps);
    let half_eta = t.scale(eta, 0.5);
    let om2 = t.square(v.omega);
    let gamma = t.add(half_eta, om2)?;
    // l = √2|ω| / (γ ρ_p)
    let om_abs = t.abs(v.omega);
    let ginv = t.recip(gamma);
    let l0 = t.hadamard(om_abs, ginv)?;
    let l = t.scale(l0, SQRT_2 / rho_pool);
    let gl = t.hadamard(gamma, l)?;
    let gl2 = t.square(gl);
    let gxg = t.scale(gl2, rho_pool * rho_pool);
    let two_g = t.scale(gamma, 2.0);
    let dg = t.sub(two_g, gxg)?;
    let dgm = t.diag(dg)?;
    let m = t.sub(dgm, fr.s)?;
    let lg = t.cholesky(m)?;
    let ut = cayley_semi_tape(t, v.yt)?;
    let lgt = t.transpose(lg);
    let utt = t.transpose(ut);
    let x = t.matmul(lgt, utt)?;
    let x = t.matmul(x, fr.lf)?;
    let c2d = t.sub(fr.g12, x)?;
    let weight = kernel_block(t, v.a12, v.b1, c2d, d)?;
    let ldiag = t.diag(l)?;
    Ok(TapeLayer {
        kind: LayerKind::Conv2dMax,
        weight,
        bias: v.bias,
        gain_in: gin,
        rep,
        gain: Some(Gain { l: ldiag, diagonal: true }),
        lambda: Some(ginv),
        p: vec![fr.p1, fr.p2],
        rho_pool,
        dims: LayerDims { c, c_in: d.c_in, r1: d.r1, r2: d.r2 },
    })
}

/// Weights of a materialized layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Fc(Mat),
    Conv1d(Roesser1D),
    Conv2d(Roesser2D),
}

/// Plain-valued layer together with the multipliers that certify it.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterializedLayer {
    pub kind: LayerKind,
    pub weights: Weights,
    pub bias: Vec<f64>,
    pub gain_in: GainFactor,
    pub rep: usize,
    pub gain: Option<GainFactor>,
    pub lambda: Vec<f64>,
    pub p: Vec<Mat>,
    pub rho_pool: f64,
}

impl MaterializedLayer {
    /// Reads the values of a tape layer.
    pub fn from_tape(t: &Tape, tl: &TapeLayer) -> Self {
        let d = tl.dims;
        let wv = t.value(tl.weight).clone();
        let bias = t.value(tl.bias).data().to_vec();
        let weights = match tl.kind {
            LayerKind::Fc | LayerKind::LastFc => Weights::Fc(wv),
            LayerKind::Conv1d | LayerKind::Conv1dMax => {
                let n = d.r1 * d.c_in;
                Weights::Conv1d(Roesser1D {
                    a: shift_up(d.r1, d.c_in),
                    b: last_block_injector(d.r1, d.c_in),
                    c: wv.block(0, 0, d.c, n),
                    d: wv.block(0, n, d.c, d.c_in),
                    bias: bias.clone(),
                    c_in: d.c_in,
                    c_out: d.c,
                    r: d.r1,
                })
            }
            LayerKind::Conv2d | LayerKind::Conv2dMax => {
                let (n1, n2) = (d.c * d.r1, d.c_in * d.r2);
                Weights::Conv2d(Roesser2D {
                    a11: shift_down(d.r1, d.c),
                    a12: wv.block(0, 0, n1, n2),
                    a21: Mat::zeros(n2, n1),
                    a22: shift_up(d.r2, d.c_in),
                    b1: wv.block(0, n2, n1, d.c_in),
                    b2: last_block_injector(d.r2, d.c_in),
                    c1: last_block_selector(d.r1, d.c),
                    c2: wv.block(n1, 0, d.c, n2),
                    d: wv.block(n1, n2, d.c, d.c_in),
                    bias: bias.clone(),
                    c_in: d.c_in,
                    c_out: d.c,
                    r1: d.r1,
                    r2: d.r2,
                })
            }
        };
        MaterializedLayer {
            kind: tl.kind,
            weights,
            bias,
            gain_in: tl.gain_in.value(t),
            rep: tl.rep,
            gain: tl.gain.map(|g| g.value(t)),
            lambda: tl.lambda.map_or(Vec::new(), |l| t.value(l).data().to_vec()),
            p: tl.p.iter().map(|&p| t.value(p).clone()).collect(),
            rho_pool: tl.rho_pool,
        }
    }
}

pub fn param_fc(p: &FcParams, gin: &GainFactor, rep: usize) -> Result<MaterializedLayer> {
    let mut t = Tape::new();
    let v = p.constants(&mut t);
    let g = Gain::constant(&mut t, gin);
    let tl = param_fc_tape(&mut t, &v, g, rep)?;
    Ok(MaterializedLayer::from_tape(&t, &tl))
}

pub fn param_last_fc(p: &LastFcParams, gin: &GainFactor, rep: usize, lq: Option<&Mat>) -> Result<MaterializedLayer> {
    let mut t = Tape::new();
    let v = p.constants(&mut t);
    let g = Gain::constant(&mut t, gin);
    let tl = param_last_fc_tape(&mut t, &v, g, rep, lq)?;
    Ok(MaterializedLayer::from_tape(&t, &tl))
}

pub fn param_conv1d(p: &Conv1dParams, gin: &GainFactor, rep: usize, rho_pool: f64, eps: f64) -> Result<MaterializedLayer> {
    let mut t = Tape::new();
    let v = p.constants(&mut t);
    let g = Gain::constant(&mut t, gin);
    let tl = param_conv1d_tape(&mut t, &v, g, rep, rho_pool, eps)?;
    Ok(MaterializedLayer::from_tape(&t, &tl))
}

pub fn param_conv1d_max(p: &Conv1dMaxParams, gin: &GainFactor, rep: usize, rho_pool: f64, eps: f64) -> Result<MaterializedLayer> {
    let mut t = Tape::new();
    let v = p.constants(&mut t);
    let g = Gain::constant(&mut t, gin);
    let tl = param_conv1d_max_tape(&mut t, &v, g, rep, rho_pool, eps)?;
    Ok(MaterializedLayer::from_tape(&t, &tl))
}

pub fn param_conv2d(p: &Conv2dParams, gin: &GainFactor, rep: usize, rho_pool: f64, eps: f64) -> Result<MaterializedLayer> {
    let mut t = Tape::new();
    let v = p.constants(&mut t);
    let g = Gain::constant(&mut t, gin);
    let tl = param_conv2d_tape(&mut t, &v, g, rep, rho_pool, eps)?;
    Ok(MaterializedLayer::from_tape(&t, &tl))
}

pub fn param_conv2d_max(p: &Conv2dMaxParams, gin: &GainFactor, rep: usize, rho_pool: f64, eps: f64) -> Result<MaterializedLayer> {
    let mut t = Tape::new();
    let v = p.constants(&mut t);
    let g = Gain::constant(&mut t, gin);
    let tl = param_conv2d_max_tape(&mut t, &v, g, rep, rho_pool, eps)?;
    Ok(MaterializedLayer::from_tape(&t, &tl))
}

#[cfg(test)]
mod front_tests {
    use super::*;
    use crate::linalg::testutil::{random_pd, Lcg};
    use crate::linalg::{cholesky, eig_sym, inverse_psd};

    fn randn(r: usize, c: usize, rng: &mut Lcg, scale: f64) -> Mat {
        Mat::from_fn(r, c, |_, _| scale * rng.normal())
    }

    fn gain(n: usize, seed: u64) -> GainFactor {
        GainFactor::new(cholesky(&random_pd(n, seed)).unwrap())
    }

    /// `(S, g12, Schur, cond F)` from the explicitly formed `F`.
    fn direct_2d(t: &mut Tape, a12: Var, b1: Var, gin: Gain, rep: usize, fr: &Conv2dFront, d: Dims2d) -> (Mat, Mat, Mat, f64) {
        let (n1, m, c) = (d.n1(), d.n2() + d.c_in, d.c);
        let (xm, _) = metric_pair(t, gin, rep).unwrap();
        let p = t.assemble(n1 + d.n2(), n1 + d.n2(), &[(0, 0, fr.p1), (n1, n1, fr.p2)]).unwrap();
        let (a, b) = super::super::gramian::roesser_ab_tape(t, a12, b1, d).unwrap();
        let f = build_f_tape(t, a, b, p, xm).unwrap();
        let f = t.value(f).clone();
        let ev = eig_sym(&f).unwrap();
        let cond = ev[ev.len() - 1] / ev[0];
        let f2 = f.block(n1, n1, m, m);
        if n1 == 0 {
            return (Mat::zeros(c, c), Mat::zeros(c, m), f2, cond);
        }
        let f1inv = inverse_psd(&f.block(0, 0, n1, n1)).unwrap();
        let f12 = f.block(0, n1, n1, m);
        let x = f1inv.mul_unchecked(&f12);
        let schur = f2.sub(&f12.tmul(&x)).unwrap();
        (f1inv.block(n1 - c, n1 - c, c, c), x.block(n1 - c, 0, c, m), schur, cond)
    }

    fn rel(a: &Mat, b: &Mat) -> f64 {
        a.max_abs_diff(b) / b.max_abs().max(1.0)
    }

    #[test]
    fn conv2d_front_matches_direct_formulas() {
        let mut rng = Lcg::new(31);
        for k in 0..24u64 {
            let d = Dims2d { c: 1 + k as usize % 3, c_in: 1 + (k as usize / 3) % 2, r1: (k as usize / 6) % 3, r2: 1 + k as usize % 2 };
            let (n1, n2) = (d.n1(), d.n2());
            let mut t = Tape::new();
            let h1 = t.constant(randn(d.c, n1, &mut rng, 0.4));
            let h2 = t.constant(randn(d.c_in, n2, &mut rng, 0.4));
            let a12 = t.constant(randn(n1, n2, &mut rng, 0.4));
            let b1 = t.constant(randn(n1, d.c_in, &mut rng, 0.4));
            let gin = Gain::constant(&mut t, &gain(d.c_in, k));
            let fr = conv2d_front(&mut t, h1, h2, a12, b1, gin, 1, d, 1e-3).unwrap();
            let (s, g12, schur, cond) = direct_2d(&mut t, a12, b1, gin, 1, &fr, d);
            // the explicit reference itself is only good to about ε·cond(F)
            let tol = 1e-12 + 1e-14 * cond;
            let lf = t.value(fr.lf);
            assert!(rel(t.value(fr.s), &s) <= tol, "S at {k}");
            assert!(rel(t.value(fr.g12), &g12) <= tol, "g12 at {k}");
            assert!(rel(lf, &cholesky(&schur).unwrap()) <= tol.sqrt(), "L_F at {k}");
            assert!((0..lf.rows()).all(|i| (0..i).all(|j| lf[(i, j)] == 0.0)), "L_F not upper at {k}");
        }
    }

    #[test]
    fn conv1d_front_matches_direct_formula() {
        let mut rng = Lcg::new(32);
        for k in 0..12u64 {
            let (c_in, r) = (1 + k as usize % 2, 1 + k as usize % 3);
            let n = c_in * r;
            let mut t = Tape::new();
            let h = t.constant(randn(3, n, &mut rng, 0.5));
            let gin = Gain::constant(&mut t, &gain(c_in, k));
            let (p, lf) = conv1d_front(&mut t, h, gin, 1, c_in, r, 1e-3).unwrap();
            let (xm, _) = metric_pair(&mut t, gin, 1).unwrap();
            let a = t.constant(shift_up(r, c_in));
            let b = t.constant(last_block_injector(r, c_in));
            let f = build_f_tape(&mut t, a, b, p, xm).unwrap();
            let want = cholesky(t.value(f)).unwrap();
            assert!(rel(t.value(lf), &want) <= 1e-8, "L_F at {k}");
        }
    }
}
