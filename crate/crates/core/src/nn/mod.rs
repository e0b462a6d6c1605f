//! Standard-form inference, the parameterized network and the Fourier-domain baseline.

mod fourier;
mod lipnet;
mod plain;

pub use fourier::{fourier_orth_forward, FourierOrthLayer};
pub use lipnet::{flat_vars, plan_layers, LayerParams, LayerPlan, LayerVars, LipNetwork, PoolPlan};
pub use plain::{Activation, PlainLayer, PlainNetwork, Shape};

#[cfg(test)]
mod tests;
