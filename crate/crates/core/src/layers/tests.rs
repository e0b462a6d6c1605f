use alloc::vec::Vec;

use super::*;
use crate::cert::{layer_lmi, passes};
use crate::linalg::testutil::{random_mat, random_pd, Lcg};
use crate::linalg::{cholesky, eig_sym, min_eig_sym, Mat};
use crate::statespace::roesser::{last_block_injector, shift_up};

fn seeded() -> rand_chacha::ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(0)
}

fn randomize(ts: Vec<&mut Mat>, rng: &mut Lcg, scale: f64) {
    for m in ts {
        for x in m.data_mut() {
            *x = scale * rng.normal();
        }
    }
}

fn random_gain(n: usize, seed: u64) -> GainFactor {
    GainFactor { l: cholesky(&random_pd(n, seed)).unwrap(), diagonal: false }
}

fn random_diag_gain(n: usize, rng: &mut Lcg) -> GainFactor {
    let d: Vec<f64> = (0..n).map(|_| 0.5 + rng.uniform()).collect();
    GainFactor { l: Mat::from_diag(&d), diagonal: true }
}

/// Min eigenvalue of the layer LMI, and whether it clears the relative tolerance.
fn lmi_check(layer: &MaterializedLayer, tol: f64) -> (f64, bool) {
    let lq = Mat::identity(layer.weights_out());
    let (m, _) = layer_lmi(layer, &lq).unwrap();
    let e = min_eig_sym(&m).unwrap();
    (e, passes(e, m.frobenius(), tol))
}

trait OutDim {
    fn weights_out(&self) -> usize;
}

impl OutDim for MaterializedLayer {
    fn weights_out(&self) -> usize {
        match &self.weights {
            Weights::Fc(w) => w.rows(),
            Weights::Conv1d(r) => r.c_out,
            Weights::Conv2d(r) => r.c_out,
        }
    }
}

#[test]
fn cayley_zero_and_rotation() {
    let (u, v) = cayley(&Mat::zeros(3, 3), &Mat::zeros(2, 3)).unwrap();
    assert_eq!(u, Mat::identity(3));
    assert_eq!(v, Mat::zeros(2, 3));
    let y = Mat::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]);
    let (u, v) = cayley(&y, &Mat::zeros(1, 2)).unwrap();
    let want = Mat::from_rows(&[[-0.6, -0.8], [0.8, -0.6]]);
    assert!(u.max_abs_diff(&want) < 1e-15, "{u:?}");
    assert_eq!(v.max_abs(), 0.0);
}

#[test]
fn cayley_random_is_orthonormal() {
    for seed in 0..50 {
        let n = 1 + (seed as usize % 5);
        let m = 1 + (seed as usize % 3);
        let (u, v) = cayley(&random_mat(n, n, seed), &random_mat(m, n, seed + 1000)).unwrap();
        let g = u.tmul(&u).add(&v.tmul(&v)).unwrap();
        assert!(g.sub(&Mat::identity(n)).unwrap().frobenius() <= 1e-10);
    }
}

#[test]
fn cayley_tall_cases() {
    assert_eq!(cayley_tall(&Mat::zeros(3, 3)).unwrap(), Mat::identity(3));
    let u = cayley_tall(&Mat::zeros(5, 2)).unwrap();
    assert_eq!(u, Mat::vstack(&[&Mat::identity(2), &Mat::zeros(3, 2)]).unwrap());
    assert!(matches!(cayley_tall(&Mat::zeros(2, 3)), Err(crate::Error::TooFewRows { rows: 2, cols: 3 })));
    for seed in 0..20 {
        let u = cayley_tall(&random_mat(6, 3, seed)).unwrap();
        assert!(u.tmul(&u).sub(&Mat::identity(3)).unwrap().frobenius() <= 1e-10);
    }
    // wide input: rows orthonormal instead
    let u = cayley_semi(&random_mat(2, 4, 3)).unwrap();
    assert!(u.mult(&u).sub(&Mat::identity(2)).unwrap().frobenius() <= 1e-10);
}

#[test]
fn fc_zero_variables() {
    let p = FcParams { y: Mat::zeros(2, 2), z: Mat::zeros(2, 2), gamma_log: Mat::zeros(2, 1), bias: Mat::zeros(1, 2) };
    let l = param_fc(&p, &GainFactor::scaled_identity(2, 1.0), 1).unwrap();
    assert_eq!(l.weights, Weights::Fc(Mat::zeros(2, 2)));
    let g = l.gain.as_ref().unwrap();
    assert!(g.l.max_abs_diff(&Mat::identity(2).scale(core::f64::consts::SQRT_2)) < 1e-15);
    let (e, ok) = lmi_check(&l, 1e-9);
    assert!(ok && e.abs() < 1e-12);
}

#[test]
fn fc_scalar_example() {
    let p = FcParams { y: Mat::zeros(1, 1), z: Mat::filled(1, 1, 0.5), gamma_log: Mat::zeros(1, 1), bias: Mat::zeros(1, 1) };
    let l = param_fc(&p, &GainFactor::scaled_identity(1, 1.0), 1).unwrap();
    let Weights::Fc(w) = &l.weights else { panic!() };
    assert!((w[(0, 0)] - core::f64::consts::SQRT_2 * 0.8).abs() < 1e-12);
    assert!((w[(0, 0)] - 1.13137).abs() < 1e-5);
    assert!((l.gain.as_ref().unwrap().l[(0, 0)] - core::f64::consts::SQRT_2 * 0.6).abs() < 1e-12);
    let (m, _) = layer_lmi(&l, &Mat::identity(1)).unwrap();
    let want = Mat::from_rows(&[[1.0, -w[(0, 0)]], [-w[(0, 0)], 2.0 - 0.72]]);
    assert!(m.max_abs_diff(&want) < 1e-12);
    assert!(min_eig_sym(&m).unwrap().abs() < 1e-12);
}

#[test]
fn fc_random_draws_feasible() {
    let mut rng = Lcg::new(1);
    for k in 0..500u64 {
        let c = 1 + (k as usize % 8);
        let cm = 1 + ((k as usize / 8) % 8);
        let mut p = FcParams { y: Mat::zeros(c, c), z: Mat::zeros(cm, c), gamma_log: Mat::zeros(c, 1), bias: Mat::zeros(1, c) };
        randomize(p.tensors_mut(), &mut rng, 1.0);
        let l = param_fc(&p, &random_gain(cm, k), 1).unwrap();
        let (e, ok) = lmi_check(&l, 1e-9);
        assert!(ok, "draw {k}: min eig {e}");
    }
}

#[test]
fn fc_flattened_input() {
    let mut rng = Lcg::new(2);
    let mut p = FcParams { y: Mat::zeros(3, 3), z: Mat::zeros(8, 3), gamma_log: Mat::zeros(3, 1), bias: Mat::zeros(1, 3) };
    randomize(p.tensors_mut(), &mut rng, 1.0);
    let l = param_fc(&p, &random_gain(2, 9), 4).unwrap();
    let (e, ok) = lmi_check(&l, 1e-9);
    assert!(ok, "{e}");
}

#[test]
fn last_fc_cases() {
    let p = LastFcParams { y: Mat::zeros(2, 2), z: Mat::zeros(3, 2), bias: Mat::zeros(1, 2) };
    let gin = random_gain(3, 4);
    let l = param_last_fc(&p, &gin, 1, None).unwrap();
    assert_eq!(l.weights, Weights::Fc(Mat::zeros(2, 3)));
    let (m, _) = layer_lmi(&l, &Mat::identity(2)).unwrap();
    assert!(m.max_abs_diff(&gin.metric()) < 1e-15);
    let mut rng = Lcg::new(3);
    for k in 0..200u64 {
        let c = 1 + (k as usize % 4);
        let cm = 1 + (k as usize / 4 % 5);
        let mut p = LastFcParams { y: Mat::zeros(c, c), z: Mat::zeros(cm, c), bias: Mat::zeros(1, c) };
        randomize(p.tensors_mut(), &mut rng, 1.0);
        let lq = if k % 2 == 0 { None } else { Some(cholesky(&random_pd(c, k)).unwrap()) };
        let l = param_last_fc(&p, &random_gain(cm, k + 7), 1, lq.as_ref()).unwrap();
        let lqm = lq.unwrap_or_else(|| Mat::identity(c));
        let (m, _) = layer_lmi(&l, &lqm).unwrap();
        assert!(min_eig_sym(&m).unwrap() >= -1e-10 * m.frobenius().max(1.0));
    }
}

#[test]
fn last_fc_scalar_bounded() {
    let mut rng = Lcg::new(4);
    for _ in 0..100 {
        let p = LastFcParams { y: Mat::filled(1, 1, 3.0 * rng.normal()), z: Mat::filled(1, 1, 3.0 * rng.normal()), bias: Mat::zeros(1, 1) };
        let l = param_last_fc(&p, &GainFactor::scaled_identity(1, 1.0), 1, None).unwrap();
        let Weights::Fc(w) = &l.weights else { panic!() };
        assert!(w[(0, 0)].abs() <= 1.0 + 1e-15);
    }
}

#[test]
fn gramian_1d_example_and_residual() {
    let t = gramian_1d(&Mat::identity(1), &Mat::zeros(2, 2), 0.01, 2, 1).unwrap();
    assert!(t.max_abs_diff(&Mat::from_diag(&[1.02, 1.01])) < 1e-15, "{t:?}");
    for seed in 0..20 {
        let (cm, r) = (1 + seed as usize % 3, 1 + seed as usize % 3);
        let n = cm * r;
        let xm = random_pd(cm, seed);
        let h = random_mat(n, n, seed + 50);
        let t = gramian_1d(&xm, &h, 1e-3, r, cm).unwrap();
        let a = shift_up(r, cm);
        let b = last_block_injector(r, cm);
        let rhs = b.mul_unchecked(&crate::linalg::inverse_psd(&xm).unwrap()).mult(&b).add(&h.tmul(&h)).unwrap().add(&Mat::identity(n).scale(1e-3)).unwrap();
        let lhs = t.sub(&a.mul_unchecked(&t).mult(&a)).unwrap();
        assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * rhs.max_abs().max(1.0));
        assert!(min_eig_sym(&t).unwrap() > 0.0);
    }
}

#[test]
fn gramian_2d_hand_example() {
    let d = Dims2d { c: 1, c_in: 1, r1: 1, r2: 1 };
    let one = Mat::identity(1);
    let z = Mat::zeros(1, 1);
    let (t1, t2) = gramian_2d(&one, &z, &z, &one, &z, 0.01, d).unwrap();
    assert!((t2[(0, 0)] - 1.01).abs() < 1e-14);
    assert!((t1[(0, 0)] - 1.02).abs() < 1e-14, "{t1:?}");
    // A = [[0, 1], [0, 0]], B = [0; 1]
    let a = Mat::from_rows(&[[0.0, 1.0], [0.0, 0.0]]);
    let b = Mat::column(&[0.0, 1.0]);
    let p = Mat::from_diag(&[1.0 / t1[(0, 0)], 1.0 / t2[(0, 0)]]);
    let f = build_f(&a, &b, &p, &one).unwrap();
    let want = Mat::from_diag(&[1.0 / 1.02, 1.0 / 1.02 - 1.0 / 1.01 + 0.0000, 1.0 - 1.0 / 1.01]);
    // middle entry: P2 − A12ᵀP1A12 = 1/1.01 − 1/1.02
    let want = {
        let mut w = want;
        w[(1, 1)] = 1.0 / 1.01 - 1.0 / 1.02;
        w
    };
    assert!(f.max_abs_diff(&want) < 1e-14, "{f:?}");
    assert!((f[(0, 0)] - 0.98039).abs() < 1e-5);
    assert!((f[(1, 1)] - 0.009707).abs() < 1e-6);
    assert!((f[(2, 2)] - 0.009901).abs() < 1e-6);
}

#[test]
fn gramian_2d_decoupled_and_random() {
    let d = Dims2d { c: 2, c_in: 1, r1: 1, r2: 2 };
    let (t1, _) = gramian_2d(&Mat::identity(1), &Mat::zeros(2, 2), &Mat::zeros(2, 2), &Mat::zeros(2, 2), &Mat::zeros(2, 1), 0.01, d).unwrap();
    assert!(t1.max_abs_diff(&Mat::identity(2).scale(0.01)) < 1e-15);
    for seed in 0..200u64 {
        let d = Dims2d { c: 1 + seed as usize % 4, c_in: 1 + (seed as usize / 4) % 4, r1: 1 + seed as usize % 3, r2: 1 + (seed as usize / 3) % 3 };
        let (n1, n2) = (d.n1(), d.n2());
        let xm = random_pd(d.c_in, seed);
        let h1 = random_mat(n1, n1, seed + 1);
        let h2 = random_mat(n2, n2, seed + 2);
        let a12 = random_mat(n1, n2, seed + 3);
        let b1 = random_mat(n1, d.c_in, seed + 4);
        let (t1, t2) = gramian_2d(&xm, &h1, &h2, &a12, &b1, 1e-3, d).unwrap();
        let mut tape = crate::autodiff::Tape::new();
        let (a12v, b1v) = (tape.constant(a12.clone()), tape.constant(b1.clone()));
        let (av, bv) = roesser_ab_tape(&mut tape, a12v, b1v, d).unwrap();
        let p = Mat::blkdiag(&[&crate::linalg::inverse_psd(&t1).unwrap(), &crate::linalg::inverse_psd(&t2).unwrap()]);
        let f = build_f(tape.value(av), tape.value(bv), &p, &xm).unwrap();
        assert!(min_eig_sym(&f).unwrap() > 0.0, "seed {seed}");
    }
}

#[test]
fn build_f_stateless_is_input_metric() {
    let xm = random_pd(3, 1);
    let f = build_f(&Mat::zeros(0, 0), &Mat::zeros(0, 3), &Mat::zeros(0, 0), &xm).unwrap();
    assert_eq!(f, xm);
}

#[test]
fn gamma_dd_cases() {
    let s = Mat::from_rows(&[[2.0, 1.0], [1.0, 2.0]]);
    let g = gamma_dd(&s, &Mat::zeros(2, 1), &Mat::filled(2, 1, 1.0), 0.01).unwrap();
    assert!((g[0] - 1.51).abs() < 1e-15 && (g[1] - 1.51).abs() < 1e-15);
    let m = Mat::from_diag(&[2.0 * g[0], 2.0 * g[1]]).sub(&s).unwrap();
    assert!((min_eig_sym(&m).unwrap() - 0.02).abs() < 1e-12);
    let g = gamma_dd(&Mat::zeros(2, 2), &Mat::column(&[0.5, 2.0]), &Mat::column(&[1.0, 3.0]), 0.01).unwrap();
    assert_eq!(g, [0.26, 4.01]);
    let mut rng = Lcg::new(8);
    for seed in 0..50 {
        let s = random_pd(4, seed);
        let delta = random_mat(4, 1, seed + 1);
        let q = Mat::from_fn(4, 1, |_, _| (rng.normal()).exp());
        let g = gamma_dd(&s, &delta, &q, 1e-3).unwrap();
        let m = Mat::from_diag(&g).scale(2.0).sub(&s).unwrap();
        assert!(min_eig_sym(&m).unwrap() > 0.0);
    }
}

#[test]
fn conv2d_zero_variables() {
    let p = Conv2dParams {
        y: Mat::zeros(1, 1),
        z: Mat::zeros(2, 1),
        h1: Mat::zeros(1, 1),
        h2: Mat::zeros(1, 1),
        a12: Mat::zeros(1, 1),
        b1: Mat::zeros(1, 1),
        delta: Mat::zeros(1, 1),
        q_log: Mat::zeros(1, 1),
        bias: Mat::zeros(1, 1),
    };
    let l = param_conv2d(&p, &GainFactor::scaled_identity(1, 1.0), 1, 1.0, DEFAULT_EPS).unwrap();
    let (e, ok) = lmi_check(&l, 1e-9);
    assert!(ok, "{e}");
}

fn conv2d_draw(rng: &mut Lcg, c: usize, cm: usize, r1: usize, r2: usize) -> Conv2dParams {
    let mut p = Conv2dParams::init(c, cm, r1, r2, &mut seeded());
    randomize(p.tensors_mut(), rng, 1.0);
    p
}

#[test]
fn conv2d_random_draws_feasible() {
    let mut rng = Lcg::new(10);
    let grid = [1usize, 2, 4];
    for k in 0..200usize {
        let c = grid[k % 3];
        let cm = grid[(k / 3) % 3];
        let r1 = 1 + (k / 9) % 2;
        let r2 = 1 + (k / 18) % 2;
        let rho = [1.0, 2.0][(k / 36) % 2];
        let p = conv2d_draw(&mut rng, c, cm, r1, r2);
        let gin = if k < 100 { GainFactor::scaled_identity(cm, rho) } else { random_gain(cm, k as u64) };
        let rho_pool = if k % 5 == 0 { 0.5 } else { 1.0 };
        let l = param_conv2d(&p, &gin, 1, rho_pool, DEFAULT_EPS).unwrap();
        let (e, ok) = lmi_check(&l, 1e-8);
        assert!(ok, "draw {k}: min eig {e}");
    }
}

#[test]
fn conv2d_folded_input_feasible() {
    let mut rng = Lcg::new(11);
    let p = conv2d_draw(&mut rng, 3, 8, 1, 1);
    let l = param_conv2d(&p, &random_gain(2, 3), 4, 1.0, DEFAULT_EPS).unwrap();
    let (e, ok) = lmi_check(&l, 1e-8);
    assert!(ok, "{e}");
}

#[test]
fn conv2d_max_random_draws_feasible() {
    let mut rng = Lcg::new(12);
    for k in 0..200usize {
        let c = [1usize, 2, 4][k % 3];
        let cm = [1usize, 2, 3][(k / 3) % 3];
        let (r1, r2) = (1 + (k / 9) % 2, 1 + (k / 18) % 2);
        let mut p = Conv2dMaxParams::init(c, cm, r1, r2, &mut seeded());
        randomize(p.tensors_mut(), &mut rng, 1.0);
        let gin = if k % 2 == 0 { random_diag_gain(cm, &mut rng) } else { random_gain(cm, k as u64) };
        let rho_pool = [1.0, 2.0_f64.sqrt()][k % 2];
        let l = param_conv2d_max(&p, &gin, 1, rho_pool, DEFAULT_EPS).unwrap();
        assert!(l.gain.as_ref().unwrap().diagonal);
        let (e, ok) = lmi_check(&l, 1e-8);
        assert!(ok, "draw {k}: min eig {e}");
    }
}

#[test]
fn conv1d_random_draws_feasible() {
    let mut rng = Lcg::new(13);
    for k in 0..200usize {
        let (c, cm, r) = (1 + k % 4, 1 + (k / 4) % 4, (k / 16) % 4);
        let mut p = Conv1dParams::init(c, cm, r, &mut seeded());
        randomize(p.tensors_mut(), &mut rng, 1.0);
        let gin = random_gain(cm, k as u64);
        let l = param_conv1d(&p, &gin, 1, [1.0, 0.5][k % 2], DEFAULT_EPS).unwrap();
        let (e, ok) = lmi_check(&l, 1e-9);
        assert!(ok, "draw {k}: min eig {e}");
    }
}

#[test]
fn conv1d_max_random_draws_feasible() {
    let mut rng = Lcg::new(14);
    for k in 0..200usize {
        let (c, cm, r) = (1 + k % 4, 1 + (k / 4) % 4, (k / 16) % 4);
        let mut p = Conv1dMaxParams::init(c, cm, r, &mut seeded());
        randomize(p.tensors_mut(), &mut rng, 1.0);
        let gin = random_diag_gain(cm, &mut rng);
        let rho_pool = [1.0, 2.0][k % 2];
        let l = param_conv1d_max(&p, &gin, 1, rho_pool, DEFAULT_EPS).unwrap();
        // 2Λ − ρ_p²X − Γ̃² vanishes by construction
        let x = l.gain.as_ref().unwrap().metric();
        for i in 0..c {
            let res = 2.0 * l.lambda[i] - rho_pool * rho_pool * x[(i, i)] - p.gamma_t[(i, 0)].powi(2);
            assert!(res.abs() <= 1e-12 * l.lambda[i].max(1.0));
        }
        let (e, ok) = lmi_check(&l, 1e-9);
        assert!(ok, "draw {k}: min eig {e}");
    }
}

#[test]
fn stateless_conv1d_matches_fc() {
    let mut rng = Lcg::new(15);
    let mut p = Conv1dParams::init(3, 2, 0, &mut seeded());
    randomize(p.tensors_mut(), &mut rng, 1.0);
    let gin = random_gain(2, 1);
    let conv = param_conv1d(&p, &gin, 1, 1.0, DEFAULT_EPS).unwrap();
    let fc = param_fc(&FcParams { y: p.y.clone(), z: p.z.clone(), gamma_log: p.gamma_log.clone(), bias: p.bias.clone() }, &gin, 1).unwrap();
    let (Weights::Conv1d(r), Weights::Fc(w)) = (&conv.weights, &fc.weights) else { panic!() };
    assert!(r.d.max_abs_diff(w) < 1e-12);
    assert!(conv.gain.unwrap().l.max_abs_diff(&fc.gain.unwrap().l) < 1e-12);
}

#[test]
fn realization_keeps_fixed_structure() {
    let mut rng = Lcg::new(16);
    let p = conv2d_draw(&mut rng, 2, 3, 2, 1);
    let l = param_conv2d(&p, &random_gain(3, 2), 1, 1.0, DEFAULT_EPS).unwrap();
    let Weights::Conv2d(r) = &l.weights else { panic!() };
    let k = crate::statespace::kernel_from_realization_2d(r).unwrap();
    let back = crate::statespace::realize_2d(&k, &r.bias).unwrap();
    assert!(back.c2.max_abs_diff(&r.c2) < 1e-14 && back.d.max_abs_diff(&r.d) < 1e-14);
    assert!(eig_sym(&l.p[0]).unwrap()[0] > 0.0);
}
