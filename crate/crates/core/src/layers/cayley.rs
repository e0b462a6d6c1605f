use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// `(U, V)` with `UᵀU + VᵀV = I` from free `Y: n×n` and `Z: m×n`.
pub fn cayley_tape(t: &mut Tape, y: Var, z: Var) -> Result<(Var, Var)> {
    let n = y.rows();
    let yt = t.transpose(y);
    let skew = t.sub(y, yt)?;
    let zt = t.transpose(z);
    let ztz = t.matmul(zt, z)?;
    let m = t.add(skew, ztz)?;
    let eye = t.constant(Mat::identity(n));
    let ipm = t.add(eye, m)?;
    let imm = t.sub(eye, m)?;
    let inv = t.inverse(ipm)?;
    let u = t.matmul(inv, imm)?;
    let zi = t.matmul(z, inv)?;
    let v = t.scale(zi, 2.0);
    Ok((u, v))
}

/// Column-orthonormal `Ũ` from a free `p×c` matrix with `p ≥ c`.
pub fn cayley_tall_tape(t: &mut Tape, g: Var) -> Result<Var> {
    let (p, c) = g.shape();
    if p < c {
        return Err(Error::TooFewRows { rows: p, cols: c });
    }
    let y = t.block(g, 0, 0, c, c)?;
    let z = t.block(g, c, 0, p - c, c)?;
    let (u, v) = cayley_tape(t, y, z)?;
    t.vstack(&[u, v])
}

/// Like [`cayley_tall_tape`], and for `p < c` returns the transpose of the
/// tall transform of `gᵀ`, whose rows are orthonormal. Either way `‖Ũ‖ ≤ 1`.
pub fn cayley_semi_tape(t: &mut Tape, g: Var) -> Result<Var> {
    if g.rows() >= g.cols() {
        return cayley_tall_tape(t, g);
    }
    let gt = t.transpose(g);
    let u = cayley_tall_tape(t, gt)?;
    Ok(t.transpose(u))
}

pub fn cayley(y: &Mat, z: &Mat) -> Result<(Mat, Mat)> {
    let mut t = Tape::new();
    let (yv, zv) = (t.constant(y.clone()), t.constant(z.clone()));
    let (u, v) = cayley_tape(&mut t, yv, zv)?;
    Ok((t.value(u).clone(), t.value(v).clone()))
}

pub fn cayley_tall(g: &Mat) -> Result<Mat> {
    let mut t = Tape::new();
    let gv = t.constant(g.clone());
    let u = cayley_tall_tape(&mut t, gv)?;
    Ok(t.value(u).clone())
}

pub fn cayley_semi(g: &Mat) -> Result<Mat> {
    let mut t = Tape::new();
    let gv = t.constant(g.clone());
    let u = cayley_semi_tape(&mut t, gv)?;
    Ok(t.value(u).clone())
}
