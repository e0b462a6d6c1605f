use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Tape, Var};
use crate::linalg::Mat;

/// Standard deviation of the initial draws for the unconstrained matrices.
pub const INIT_STD: f64 = 0.02;

pub(crate) fn normal_mat<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    let d = Normal::new(0.0, INIT_STD).expect("valid normal");
    Mat::from_fn(rows, cols, |_, _| d.sample(rng))
}

macro_rules! param_set {
    ($(#[$meta:meta])* $name:ident, $vars:ident { $($field:ident),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            $(pub $field: Mat,)*
        }

        /// Tape handles for the matching parameter set.
        #[derive(Debug, Clone, Copy)]
        pub struct $vars {
            $(pub $field: Var,)*
        }

        impl $name {
            pub const NAMES: &'static [&'static str] = &[$(stringify!($field)),*];

            pub fn tensors(&self) -> Vec<&Mat> {
                vec![$(&self.$field),*]
            }

            pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
                vec![$(&mut self.$field),*]
            }

            /// Registers every tensor as a trainable leaf.
            pub fn leaves(&self, t: &mut Tape) -> $vars {
                $vars { $($field: t.leaf(self.$field.clone()),)* }
            }

            /// Registers every tensor as a constant.
            pub fn constants(&self, t: &mut Tape) -> $vars {
                $vars { $($field: t.constant(self.$field.clone()),)* }
            }

            /// Rebuilds the set from tensors in [`Self::NAMES`] order.
            pub fn from_tensors(mut it: impl Iterator<Item = Mat>) -> Option<Self> {
                Some($name { $($field: it.next()?,)* })
            }
        }

        impl $vars {
            pub fn all(&self) -> Vec<Var> {
                vec![$(self.$field),*]
            }

            /// Inverse of [`Self::all`].
            pub fn from_vars(vs: &[Var]) -> Option<Self> {
                let mut it = vs.iter().copied();
                let out = $vars { $($field: it.next()?,)* };
                it.next().is_none().then_some(out)
            }
        }
    };
}

param_set!(
    /// Free variables of an activated fully connected layer.
    FcParams, FcVars { y, z, gamma_log, bias }
);
param_set!(
    /// Free variables of the affine output layer.
    LastFcParams, LastFcVars { y, z, bias }
);
param_set!(
    /// Free variables of a 1-D convolution.
    Conv1dParams, Conv1dVars { y, z, h, gamma_log, bias }
);
param_set!(
    /// Free variables of a 1-D convolution followed by max pooling.
    Conv1dMaxParams, Conv1dMaxVars { yt, h, gamma_t, l_log, bias }
);
param_set!(
    /// Free variables of a 2-D convolution, optionally average pooled.
    Conv2dParams, Conv2dVars { y, z, h1, h2, a12, b1, delta, q_log, bias }
);
param_set!(
    /// Free variables of a 2-D convolution followed by max pooling.
    Conv2dMaxParams, Conv2dMaxVars { yt, h1, h2, a12, b1, delta, q_log, omega, bias }
);

impl FcParams {
    /// `c_in` counts the full (possibly flattened) input dimension.
    pub fn init<R: Rng + ?Sized>(c: usize, c_in: usize, rng: &mut R) -> Self {
        FcParams {
            y: normal_mat(c, c, rng),
            z: normal_mat(c_in, c, rng),
            gamma_log: Mat::zeros(c, 1),
            bias: Mat::zeros(1, c),
        }
    }
}

impl LastFcParams {
    pub fn init<R: Rng + ?Sized>(c: usize, c_in: usize, rng: &mut R) -> Self {
        LastFcParams { y: normal_mat(c, c, rng), z: normal_mat(c_in, c, rng), bias: Mat::zeros(1, c) }
    }
}

impl Conv1dParams {
    pub fn init<R: Rng + ?Sized>(c: usize, c_in: usize, r: usize, rng: &mut R) -> Self {
        let n = r * c_in;
        Conv1dParams {
            y: normal_mat(c, c, rng),
            z: normal_mat(n + c_in, c, rng),
            h: normal_mat(n, n, rng),
            gamma_log: Mat::zeros(c, 1),
            bias: Mat::zeros(1, c),
        }
    }
}

impl Conv1dMaxParams {
    pub fn init<R: Rng + ?Sized>(c: usize, c_in: usize, r: usize, rng: &mut R) -> Self {
        let n = r * c_in;
        Conv1dMaxParams {
            yt: normal_mat(n + c_in, c, rng),
            h: normal_mat(n, n, rng),
            gamma_t: Mat::filled(c, 1, 1.0),
            l_log: Mat::zeros(c, 1),
            bias: Mat::zeros(1, c),
        }
    }
}

impl Conv2dParams {
    pub fn init<R: Rng + ?Sized>(c: usize, c_in: usize, r1: usize, r2: usize, rng: &mut R) -> Self {
        let (n1, n2) = (c * r1, c_in * r2);
        Conv2dParams {
            y: normal_mat(c, c, rng),
            z: normal_mat(n2 + c_in, c, rng),
            h1: normal_mat(n1, n1, rng),
            h2: normal_mat(n2, n2, rng),
            a12: normal_mat(n1, n2, rng),
            b1: normal_mat(n1, c_in, rng),
            delta: Mat::filled(c, 1, 1.0),
            q_log: Mat::zeros(c, 1),
            bias: Mat::zeros(1, c),
        }
    }
}

impl Conv2dMaxParams {
    pub fn init<R: Rng + ?Sized>(c: usize, c_in: usize, r1: usize, r2: usize, rng: &mut R) -> Self {
        let (n1, n2) = (c * r1, c_in * r2);
        Conv2dMaxParams {
            yt: normal_mat(n2 + c_in, c, rng),
            h1: normal_mat(n1, n1, rng),
            h2: normal_mat(n2, n2, rng),
            a12: normal_mat(n1, n2, rng),
            b1: normal_mat(n1, c_in, rng),
            delta: Mat::filled(c, 1, 1.0),
            q_log: Mat::zeros(c, 1),
            omega: Mat::filled(c, 1, 1.0),
            bias: Mat::zeros(1, c),
        }
    }
}
