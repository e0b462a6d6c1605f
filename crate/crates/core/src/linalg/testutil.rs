//! Small deterministic generators for unit tests.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;


use super::Mat;

pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg(seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407))
    }

    pub fn uniform(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        let (u, v) = (self.uniform(), self.uniform());
        (-2.0 * u.ln()).sqrt() * f64::cos(2.0 * core::f64::consts::PI * v)
    }
}

pub fn random_mat(r: usize, c: usize, seed: u64) -> Mat {
    let mut rng = Lcg::new(seed);
    let v: Vec<f64> = (0..r * c).map(|_| rng.normal()).collect();
    Mat::from_vec(r, c, v)
}

pub fn random_sym(n: usize, seed: u64) -> Mat {
    random_mat(n, n, seed).symmetrized()
}

pub fn random_pd(n: usize, seed: u64) -> Mat {
    let g = random_mat(n, n, seed);
    g.tmul(&g).add(&Mat::identity(n).scale(0.1)).unwrap()
}
