//! Reverse-mode differentiation over dense matrix expressions.
//!
//! A [`Tape`] is rebuilt for every evaluation. Each op caches its forward
//! value, and [`Tape::backward`] walks the nodes in reverse once.

mod check;
mod tape;

pub use check::{grad_check, GradReport};
pub use tape::{Gradients, Pool2d, PoolKind, Tape, Var, ZERO};

#[cfg(test)]
mod tests;
