#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::Tape;
use crate::error::Result;
use crate::linalg::{spectral_norm_with_vector, Mat};
use crate::nn::PlainNetwork;

/// Jacobian of `net` at the single sample `x` (a 1×n row), one row per output.
///
/// The sample is replicated once per output so a single reverse pass yields
/// every row.
pub fn jacobian(net: &PlainNetwork, x: &[f64]) -> Result<Mat> {
    let m = net.output_shape()?.len();
    let n = x.len();
    let mut t = Tape::new();
    let xs = t.leaf(Mat::from_fn(m, n, |_, j| x[j]));
    let y = net.forward_tape(&mut t, xs)?;
    let sel = t.constant(Mat::identity(m));
    let picked = t.hadamard(y, sel)?;
    let loss = t.sum(picked);
    Ok(t.backward(loss)?.get(xs))
}

fn ratio(net: &PlainNetwork, x: &[f64], d: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let n = x.len();
    let mut t = Tape::new();
    let xv = t.leaf(Mat::row(x));
    let dv = t.leaf(Mat::row(d));
    let xd = t.add(xv, dv)?;
    let (fa, fb) = (net.forward_tape(&mut t, xd)?, net.forward_tape(&mut t, xv)?);
    let diff = t.sub(fa, fb)?;
    let num = t.square(diff);
    let num = t.sum(num);
    let den = t.square(dv);
    let den = t.sum(den);
    let inv = t.recip(den);
    let q = t.hadamard(num, inv)?;
    let r = t.sqrt(q);
    let g = t.backward(r)?;
    let gx = g.get(xv).into_vec();
    let gd = g.get(dv).into_vec();
    debug_assert_eq!(gx.len(), n);
    Ok((t.scalar(r), gx, gd))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Lower bound on the Lipschitz constant of `net` in the plain ℓ2 metric.
///
/// Each trial draws an input uniformly from [0,1]ⁿ, takes the spectral norm of
/// the Jacobian there, and then runs `iters` normalized gradient ascent steps
/// on the difference quotient ‖f(x+δ)−f(x)‖/‖δ‖ starting along the top right
/// singular vector. Only finite-difference quotients and Jacobian norms
/// enter the maximum, so the result never exceeds the true constant.
pub fn empirical_lipschitz(net: &PlainNetwork, trials: usize, iters: usize, seed: u64) -> Result<f64> {
    let n = net.input.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..trials {
        let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let j = jacobian(net, &x)?;
        let (s, v) = spectral_norm_with_vector(&j);
        best = best.max(s);
        if iters == 0 {
            continue;
        }
        let mut d: Vec<f64> = if norm(&v) > 0.0 { v } else { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
        let scale = 1e-2 / norm(&d).max(f64::MIN_POSITIVE);
        d.iter_mut().for_each(|a| *a *= scale);
        let mut step = 0.1;
        let mut prev = 0.0;
        for _ in 0..iters {
            let (r, gx, gd) = ratio(net, &x, &d)?;
            if !r.is_finite() {
                break;
            }
            best = best.max(r);
            if r < prev {
                step *= 0.5;
            }
            prev = r;
            let (ngx, ngd) = (norm(&gx), norm(&gd));
            let nd = norm(&d);
            if ngd > 0.0 {
                d.iter_mut().zip(&gd).for_each(|(a, g)| *a += step * nd * g / ngd);
            }
            if ngx > 0.0 {
                x.iter_mut().zip(&gx).for_each(|(a, g)| *a += step * g / ngx);
            }
            if norm(&d) == 0.0 {
                break;
            }
        }
    }
    Ok(best)
}
