#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;


use super::mat::{dot, norm2};
use super::Mat;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenvalues of the symmetric part of `a` by cyclic Jacobi rotations.
///
/// Iterates until the off-diagonal Frobenius norm drops below `1e-12·‖a‖_F`.
/// Eigenvalues are returned in ascending order.
pub fn eig_sym(a: &Mat) -> Result<Vec<f64>> {
    assert!(a.is_square(), "eig_sym needs a square matrix");
    let n = a.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut m = a.symmetrized();
    let tol = 1e-12 * m.frobenius();
    let idx = |i: usize, j: usize| i * n + j;
    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let d = m.data();
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += d[idx(i, j)] * d[idx(i, j)];
                }
            }
        }
        if off.sqrt() <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let d = m.data_mut();
                let apq = d[idx(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = d[idx(p, p)];
                let aqq = d[idx(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = d[idx(k, p)];
                    let akq = d[idx(k, q)];
                    d[idx(k, p)] = c * akp - s * akq;
                    d[idx(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = d[idx(p, k)];
                    let aqk = d[idx(q, k)];
                    d[idx(p, k)] = c * apk - s * aqk;
                    d[idx(q, k)] = s * apk + c * aqk;
                }
                d[idx(p, q)] = 0.0;
                d[idx(q, p)] = 0.0;
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence { sweeps: MAX_SWEEPS });
    }
    let mut ev = m.diag();
    ev.sort_by(|x, y| x.total_cmp(y));
    Ok(ev)
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_eig_sym(a: &Mat) -> Result<f64> {
    Ok(eig_sym(a)?.first().copied().unwrap_or(f64::INFINITY))
}

pub fn max_eig_sym(a: &Mat) -> Result<f64> {
    Ok(eig_sym(a)?.last().copied().unwrap_or(f64::NEG_INFINITY))
}

/// Largest singular value by power iteration on `aᵀa`.
///
/// Stops when the Rayleigh quotient stalls or after 10 000 iterations.
pub fn spectral_norm(a: &Mat) -> f64 {
    spectral_norm_with_vector(a).0
}

/// Largest singular value together with the right singular vector estimate.
pub fn spectral_norm_with_vector(a: &Mat) -> (f64, Vec<f64>) {
    let n = a.cols();
    if n == 0 || a.rows() == 0 || a.max_abs() == 0.0 {
        return (0.0, vec![0.0; n]);
    }
    // deterministic start with no special alignment to coordinate axes
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * f64::sin(1.7 * i as f64 + 0.3)).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut lambda = 0.0f64;
    let mut stalls = 0;
    for _ in 0..10_000 {
        let av = a.matvec(&v);
        let w = a.tmatvec(&av);
        let rq = dot(&av, &av);
        let nw = norm2(&w);
        if nw == 0.0 {
            break;
        }
        v = w.into_iter().map(|x| x / nw).collect();
        if (rq - lambda).abs() <= 1e-15 * rq {
            stalls += 1;
            if stalls >= 3 {
                lambda = rq;
                break;
            }
        } else {
            stalls = 0;
        }
        lambda = rq;
    }
    let av = a.matvec(&v);
    (norm2(&av).max(lambda.sqrt()), v)
}
