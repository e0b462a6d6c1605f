use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::linalg::testutil::{random_mat, random_pd};
use crate::linalg::Mat;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-5;

fn check(f: impl Fn(&mut Tape, &[Var]) -> crate::Result<Var>, pt: &[Mat]) {
    let r = grad_check(f, pt, STEP, TOL).unwrap();
    assert!(r.pass, "{r:?}");
}

/// Random weights turning a matrix output into a scalar.
fn weigh(t: &mut Tape, x: Var, seed: u64) -> crate::Result<Var> {
    let w = t.constant(random_mat(x.rows(), x.cols(), seed));
    let h = t.hadamard(x, w)?;
    Ok(t.sum(h))
}

#[test]
fn sum_gradient_is_ones() {
    let mut t = Tape::new();
    let x = t.leaf(random_mat(3, 2, 1));
    let s = t.sum(x);
    let g = t.backward(s).unwrap();
    assert_eq!(g.get(x), Mat::filled(3, 2, 1.0));
}

#[test]
fn squared_norm_gradient() {
    let mut t = Tape::new();
    let xm = random_mat(4, 1, 2);
    let x = t.leaf(xm.clone());
    let q = t.square(x);
    let s = t.sum(q);
    let g = t.backward(s).unwrap();
    assert!(g.get(x).max_abs_diff(&xm.scale(2.0)) < 1e-15);
}

#[test]
fn unreachable_leaf_gets_zero() {
    let mut t = Tape::new();
    let x = t.leaf(random_mat(2, 2, 1));
    let v = t.leaf(random_mat(3, 1, 2));
    let s = t.sum(x);
    let g = t.backward(s).unwrap();
    assert_eq!(g.get(v), Mat::zeros(3, 1));
}

#[test]
fn trace_product_gradient() {
    let (am, bm) = (random_mat(3, 4, 1), random_mat(4, 3, 2));
    let mut t = Tape::new();
    let a = t.leaf(am);
    let b = t.constant(bm.clone());
    let ab = t.matmul(a, b).unwrap();
    let d = t.diag_vec(ab).unwrap();
    let s = t.sum(d);
    let g = t.backward(s).unwrap();
    assert!(g.get(a).max_abs_diff(&bm.transpose()) < 1e-15);
}

#[test]
fn non_scalar_loss_rejected() {
    let mut t = Tape::new();
    let x = t.leaf(random_mat(2, 2, 1));
    assert_eq!(t.backward(x).unwrap_err(), crate::Error::NotScalarLoss { rows: 2, cols: 2 });
}

#[test]
fn shape_mismatch_reported() {
    let mut t = Tape::new();
    let a = t.leaf(random_mat(2, 3, 1));
    let b = t.leaf(random_mat(2, 3, 2));
    assert!(matches!(t.matmul(a, b), Err(crate::Error::ShapeMismatch { .. })));
}

#[test]
fn linear_function_is_exact() {
    // central differences are exact for linear maps, so only round-off remains; a
    // wider step keeps that round-off (|f|·2⁻⁵²/step) well below the threshold
    let r = grad_check(|t, v| weigh(t, v[0], 9), &[random_mat(3, 3, 4)], 1e-3, TOL).unwrap();
    assert!(r.max_rel_err <= 1e-10, "{r:?}");
}

#[test]
fn elementwise_ops() {
    // positive points keep sqrt/recip smooth and keep abs/relu off their kinks
    let pos = random_mat(3, 3, 5).map(|x| x.abs() + 0.5);
    let gen = random_mat(3, 3, 6).map(|x| if x.abs() < 0.1 { x + 0.3 } else { x });
    type UnOp = fn(&mut Tape, Var) -> Var;
    let ops: [(UnOp, bool); 7] = [
        (|t, x| t.exp(x), false),
        (|t, x| t.tanh(x), false),
        (|t, x| t.relu(x), false),
        (|t, x| t.abs(x), false),
        (|t, x| t.square(x), false),
        (|t, x| t.sqrt(x), true),
        (|t, x| t.recip(x), true),
    ];
    for (k, (op, needs_pos)) in ops.iter().enumerate() {
        let pt = if *needs_pos { pos.clone() } else { gen.clone() };
        check(|t, v| {
            let y = op(t, v[0]);
            weigh(t, y, k as u64)
        }, &[pt]);
    }
}

#[test]
fn structural_ops() {
    let a = random_mat(4, 3, 1);
    let b = random_mat(4, 3, 2);
    check(|t, v| {
        let s = t.add(v[0], v[1])?;
        let d = t.sub(s, v[1])?;
        let h = t.hadamard(d, v[1])?;
        let sc = t.scale(h, -1.5);
        let tr = t.transpose(sc);
        let bl = t.block(tr, 1, 0, 2, 3)?;
        let r = t.reshape(bl, 3, 2)?;
        let hs = t.hstack(&[r, r])?;
        let vs = t.vstack(&[hs, hs])?;
        let p = t.add_scalar(vs, 2.0);
        weigh(t, p, 3)
    }, &[a.clone(), b.clone()]);
    check(|t, v| {
        let m = t.matmul(v[0], v[1])?;
        let row = t.block(v[1], 0, 0, 1, 4)?;
        let ar = t.add_row(m, row)?;
        weigh(t, ar, 8)
    }, &[a.clone(), b.transpose()]);
    check(|t, v| {
        let c = t.block(v[0], 0, 0, 4, 1)?;
        let r = t.row_scale(c, v[1])?;
        let d = t.block(v[0], 0, 1, 3, 1)?;
        let q = t.col_scale(r, d)?;
        weigh(t, q, 2)
    }, &[a.clone(), b.clone()]);
    check(|t, v| {
        let col = t.block(v[0], 0, 0, 3, 1)?;
        let d = t.diag(col)?;
        let sq = t.block(v[0], 0, 0, 3, 3)?;
        let m = t.matmul(d, sq)?;
        let dv = t.diag_vec(m)?;
        let e = t.exp(dv);
        weigh(t, e, 5)
    }, &[a.clone()]);
    check(|t, v| {
        let idx = vec![0, 5, super::ZERO, 11, 0, 3];
        let g = t.gather(v[0], idx, 2, 3)?;
        let g2 = t.square(g);
        weigh(t, g2, 2)
    }, &[a.clone()]);
    check(|t, v| {
        let z = t.assemble(6, 5, &[(0, 0, v[0]), (2, 2, v[1]), (1, 1, v[0])])?;
        weigh(t, z, 4)
    }, &[a, b]);
}

#[test]
fn inverse_and_solve_ops() {
    let a = random_mat(4, 4, 3).add(&Mat::identity(4).scale(3.0)).unwrap();
    let b = random_mat(4, 2, 4);
    let pd = random_pd(4, 5);
    check(|t, v| {
        let i = t.inverse(v[0])?;
        weigh(t, i, 1)
    }, &[a.clone()]);
    check(|t, v| {
        let x = t.solve(v[0], v[1])?;
        weigh(t, x, 2)
    }, &[a.clone(), b.clone()]);
    check(|t, v| {
        let x = t.solve_psd(v[0], v[1])?;
        weigh(t, x, 3)
    }, &[pd.clone(), b.clone()]);
    check(|t, v| {
        let x = t.inverse_psd(v[0])?;
        weigh(t, x, 4)
    }, &[pd.clone()]);
}

#[test]
fn cholesky_adjoint_matches_differences() {
    for seed in 0..5 {
        let pd = random_pd(5, seed);
        check(|t, v| {
            let l = t.cholesky(v[0])?;
            Ok(t.sum(l))
        }, &[pd.clone()]);
        check(|t, v| {
            let l = t.cholesky(v[0])?;
            weigh(t, l, seed + 10)
        }, &[pd]);
    }
}

#[test]
fn pooling_and_cross_entropy() {
    let x = random_mat(2 * 4 * 4, 3, 7);
    for kind in [PoolKind::Average, PoolKind::Max] {
        let geom = Pool2d { kind, batch: 2, h: 4, w: 4, window: (2, 2), stride: (2, 2) };
        check(|t, v| {
            let p = t.pool(v[0], geom)?;
            weigh(t, p, 1)
        }, &[x.clone()]);
        let geom = Pool2d { kind, batch: 2, h: 4, w: 4, window: (3, 3), stride: (1, 1) };
        check(|t, v| {
            let p = t.pool(v[0], geom)?;
            weigh(t, p, 2)
        }, &[x.clone()]);
    }
    let labels: Vec<usize> = vec![0, 2, 1, 1];
    check(|t, v| t.softmax_cross_entropy(v[0], &labels), &[random_mat(4, 3, 9)]);
}

#[test]
fn backward_is_deterministic() {
    let run = || {
        let mut t = Tape::new();
        let a = t.leaf(random_pd(4, 1));
        let l = t.cholesky(a).unwrap();
        let i = t.inverse(l).unwrap();
        let s = t.sum(i);
        t.backward(s).unwrap().get(a)
    };
    assert_eq!(run().data(), run().data());
}
