//! Direct parameterizations: free variables mapped to layers that satisfy
//! their dissipation inequalities by construction.

mod any;
mod cayley;
mod gramian;
mod param;
mod params;

pub use any::AnyParams;
pub use cayley::{cayley, cayley_semi, cayley_semi_tape, cayley_tall, cayley_tall_tape, cayley_tape};
pub use gramian::{
    build_f, build_f_tape, gramian_1d, gramian_1d_tape, gramian_2d, gramian_2d_tape, kron_eye_tape,
    roesser_ab_tape, Dims2d, Gramian2d,
};
pub use param::*;
pub use params::*;

/// Default `ε` of the Gramian and diagonal-dominance constructions.
pub const DEFAULT_EPS: f64 = 1e-3;

#[cfg(test)]
mod tests;
