use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::linalg::Mat;
use crate::statespace::roesser::{last_block_injector, shift_down, shift_up};

/// Channel and order sizes of a stride-1 2-D convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims2d {
    pub c: usize,
    pub c_in: usize,
    pub r1: usize,
    pub r2: usize,
}

impl Dims2d {
    pub fn n1(&self) -> usize {
        self.c * self.r1
    }

    pub fn n2(&self) -> usize {
        self.c_in * self.r2
    }
}

/// `I_k ⊗ a` on the tape.
pub fn kron_eye_tape(t: &mut Tape, a: Var, k: usize) -> Result<Var> {
    if k == 1 {
        return Ok(a);
    }
    let (r, c) = a.shape();
    let parts: Vec<_> = (0..k).map(|i| (i * r, i * c, a)).collect();
    t.assemble(k * r, k * c, &parts)
}

/// `Σ_k Aᵏ m (Aᵀ)ᵏ` for a nilpotent constant `a`, evaluated as `T ← m + A T Aᵀ`.
fn nilpotent_sum(t: &mut Tape, a: &Mat, m: Var, steps: usize) -> Result<Var> {
    let mut acc = m;
    if steps <= 1 {
        return Ok(acc);
    }
    let av = t.constant(a.clone());
    let at = t.constant(a.transpose());
    for _ in 1..steps {
        let l = t.matmul(av, acc)?;
        let lr = t.matmul(l, at)?;
        acc = t.add(m, lr)?;
    }
    Ok(acc)
}

/// `hᵀh + εI`.
pub(crate) fn gram_eps(t: &mut Tape, h: Var, eps: f64) -> Result<Var> {
    let ht = t.transpose(h);
    let hh = t.matmul(ht, h)?;
    let e = t.constant(Mat::identity(h.cols()).scale(eps));
    t.add(hh, e)
}

/// Lyapunov solution for the 1-D shift pair with `n = r·c_in` states.
pub fn gramian_1d_tape(t: &mut Tape, xinv: Var, h: Var, eps: f64, r: usize, c_in: usize) -> Result<Var> {
    let b = t.constant(last_block_injector(r, c_in));
    let bx = t.matmul(b, xinv)?;
    let bt = t.constant(last_block_injector(r, c_in).transpose());
    let bxb = t.matmul(bx, bt)?;
    let he = gram_eps(t, h, eps)?;
    let m = t.add(bxb, he)?;
    nilpotent_sum(t, &shift_up(r, c_in), m, r)
}

/// Output of the 2-D Gramian construction together with the pieces of
/// `M = T − A T Aᵀ − B X₋⁻¹ Bᵀ = [N1 + E Sc⁻¹ Eᵀ, −E; −Eᵀ, Sc]`.
#[derive(Debug, Clone, Copy)]
pub struct Gramian2d {
    pub t1: Var,
    pub t2: Var,
    /// `H1ᵀH1 + εI`.
    pub n1: Var,
    /// `H2ᵀH2 + εI`, equal to `T2 − A22 T2 A22ᵀ − X̃22`.
    pub sc: Var,
    /// `X̃12 + A12 T2 A22ᵀ`.
    pub e: Var,
    /// `X̂11 + H1ᵀH1 + εI`, equal to `T1 − A11 T1 A11ᵀ`.
    pub m1: Var,
}

/// Block-triangular Lyapunov solutions `(T1, T2)` for the 2-D realization.
#[allow(clippy::too_many_arguments)]
pub fn gramian_2d_tape(
    t: &mut Tape,
    xinv: Var,
    h1: Var,
    h2: Var,
    a12: Var,
    b1: Var,
    eps: f64,
    d: Dims2d,
) -> Result<Gramian2d> {
    let (n1, n2) = (d.n1(), d.n2());
    let a11 = shift_down(d.r1, d.c);
    let a22 = shift_up(d.r2, d.c_in);
    let b2 = t.constant(last_block_injector(d.r2, d.c_in));
    let b = t.vstack(&[b1, b2])?;
    let bx = t.matmul(b, xinv)?;
    let bt = t.transpose(b);
    let xt = t.matmul(bx, bt)?;
    let x11 = t.block(xt, 0, 0, n1, n1)?;
    let x12 = t.block(xt, 0, n1, n1, n2)?;
    let x22 = t.block(xt, n1, n1, n2, n2)?;

    let he2 = gram_eps(t, h2, eps)?;
    let m2 = t.add(x22, he2)?;
    let t2 = nilpotent_sum(t, &a22, m2, d.r2)?;

    let a22t = t.constant(a22.transpose());
    let sc = he2;

    let a12t2 = t.matmul(a12, t2)?;
    let e0 = t.matmul(a12t2, a22t)?;
    let e = t.add(x12, e0)?;
    let a12t = t.transpose(a12);
    let q0 = t.matmul(a12t2, a12t)?;
    let et = t.transpose(e);
    let se = t.solve_psd(sc, et)?;
    let ese = t.matmul(e, se)?;
    let q1 = t.add(q0, x11)?;
    let xhat = t.add(q1, ese)?;

    let he1 = gram_eps(t, h1, eps)?;
    let m1 = t.add(xhat, he1)?;
    let t1 = nilpotent_sum(t, &a11, m1, d.r1)?;
    Ok(Gramian2d { t1, t2, n1: he1, sc, e, m1 })
}

/// `F = blkdiag(P, X₋) − [A B]ᵀ P [A B]`.
pub fn build_f_tape(t: &mut Tape, a: Var, b: Var, p: Var, xm: Var) -> Result<Var> {
    let g = t.hstack(&[a, b])?;
    let pg = t.matmul(p, g)?;
    let gt = t.transpose(g);
    let gpg = t.matmul(gt, pg)?;
    let n = p.rows();
    let m = xm.rows();
    let d = t.assemble(n + m, n + m, &[(0, 0, p), (n, n, xm)])?;
    t.sub(d, gpg)
}

/// Boldface `(A, B)` of the 2-D realization with free `A12`, `B1`.
pub fn roesser_ab_tape(t: &mut Tape, a12: Var, b1: Var, d: Dims2d) -> Result<(Var, Var)> {
    let (n1, n2) = (d.n1(), d.n2());
    let a11 = t.constant(shift_down(d.r1, d.c));
    let a22 = t.constant(shift_up(d.r2, d.c_in));
    let a = t.assemble(n1 + n2, n1 + n2, &[(0, 0, a11), (0, n1, a12), (n1, n1, a22)])?;
    let b2 = t.constant(last_block_injector(d.r2, d.c_in));
    let b = t.vstack(&[b1, b2])?;
    Ok((a, b))
}

pub fn gramian_1d(xm: &Mat, h: &Mat, eps: f64, r: usize, c_in: usize) -> Result<Mat> {
    let mut t = Tape::new();
    let x = t.constant(xm.clone());
    let xinv = t.inverse_psd(x)?;
    let hv = t.constant(h.clone());
    let g = gramian_1d_tape(&mut t, xinv, hv, eps, r, c_in)?;
    Ok(t.value(g).clone())
}

#[allow(clippy::too_many_arguments)]
pub fn gramian_2d(xm: &Mat, h1: &Mat, h2: &Mat, a12: &Mat, b1: &Mat, eps: f64, d: Dims2d) -> Result<(Mat, Mat)> {
    let mut t = Tape::new();
    let x = t.constant(xm.clone());
    let xinv = t.inverse_psd(x)?;
    let [h1, h2, a12, b1] = [h1, h2, a12, b1].map(|m| t.constant(m.clone()));
    let g = gramian_2d_tape(&mut t, xinv, h1, h2, a12, b1, eps, d)?;
    Ok((t.value(g.t1).clone(), t.value(g.t2).clone()))
}

/// `F` for a realization with state matrices `(a, b)`, multiplier `p` and incoming `X₋`.
pub fn build_f(a: &Mat, b: &Mat, p: &Mat, xm: &Mat) -> Result<Mat> {
    let mut t = Tape::new();
    let [a, b, p, xm] = [a, b, p, xm].map(|m| t.constant(m.clone()));
    let f = build_f_tape(&mut t, a, b, p, xm)?;
    Ok(t.value(f).symmetrized())
}
