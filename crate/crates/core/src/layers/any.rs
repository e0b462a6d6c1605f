use alloc::vec::Vec;

use rand::Rng;

use super::param::*;
use super::params::*;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Free variables of any of the six layer parameterizations.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyParams {
    Fc(FcParams),
    LastFc(LastFcParams),
    Conv1d(Conv1dParams),
    Conv1dMax(Conv1dMaxParams),
    Conv2d(Conv2dParams),
    Conv2dMax(Conv2dMaxParams),
}

impl AnyParams {
    /// Standard initialization; `d.c_in` is the full input width.
    pub fn init<R: Rng + ?Sized>(kind: LayerKind, d: LayerDims, rng: &mut R) -> Self {
        match kind {
            LayerKind::Fc => AnyParams::Fc(FcParams::init(d.c, d.c_in, rng)),
            LayerKind::LastFc => AnyParams::LastFc(LastFcParams::init(d.c, d.c_in, rng)),
            LayerKind::Conv1d => AnyParams::Conv1d(Conv1dParams::init(d.c, d.c_in, d.r1, rng)),
            LayerKind::Conv1dMax => AnyParams::Conv1dMax(Conv1dMaxParams::init(d.c, d.c_in, d.r1, rng)),
            LayerKind::Conv2d => AnyParams::Conv2d(Conv2dParams::init(d.c, d.c_in, d.r1, d.r2, rng)),
            LayerKind::Conv2dMax => AnyParams::Conv2dMax(Conv2dMaxParams::init(d.c, d.c_in, d.r1, d.r2, rng)),
        }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            AnyParams::Fc(_) => LayerKind::Fc,
            AnyParams::LastFc(_) => LayerKind::LastFc,
            AnyParams::Conv1d(_) => LayerKind::Conv1d,
            AnyParams::Conv1dMax(_) => LayerKind::Conv1dMax,
            AnyParams::Conv2d(_) => LayerKind::Conv2d,
            AnyParams::Conv2dMax(_) => LayerKind::Conv2dMax,
        }
    }

    pub fn tensors(&self) -> Vec<&Mat> {
        match self {
            AnyParams::Fc(p) => p.tensors(),
            AnyParams::LastFc(p) => p.tensors(),
            AnyParams::Conv1d(p) => p.tensors(),
            AnyParams::Conv1dMax(p) => p.tensors(),
            AnyParams::Conv2d(p) => p.tensors(),
            AnyParams::Conv2dMax(p) => p.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        match self {
            AnyParams::Fc(p) => p.tensors_mut(),
            AnyParams::LastFc(p) => p.tensors_mut(),
            AnyParams::Conv1d(p) => p.tensors_mut(),
            AnyParams::Conv1dMax(p) => p.tensors_mut(),
            AnyParams::Conv2d(p) => p.tensors_mut(),
            AnyParams::Conv2dMax(p) => p.tensors_mut(),
        }
    }

    /// Runs the parameterization on `vars`, given in [`Self::tensors`] order.
    pub fn tape_layer(&self, t: &mut Tape, vars: &[Var], gin: Gain, rep: usize, rho_pool: f64, eps: f64, lq: Option<&Mat>) -> Result<TapeLayer> {
        let bad = || Error::InvalidSpec(alloc::format!("{} variables for a {} layer", vars.len(), self.kind().name()));
        match self {
            AnyParams::Fc(_) => param_fc_tape(t, &FcVars::from_vars(vars).ok_or_else(bad)?, gin, rep),
            AnyParams::LastFc(_) => param_last_fc_tape(t, &LastFcVars::from_vars(vars).ok_or_else(bad)?, gin, rep, lq),
            AnyParams::Conv1d(_) => param_conv1d_tape(t, &Conv1dVars::from_vars(vars).ok_or_else(bad)?, gin, rep, rho_pool, eps),
            AnyParams::Conv1dMax(_) => param_conv1d_max_tape(t, &Conv1dMaxVars::from_vars(vars).ok_or_else(bad)?, gin, rep, rho_pool, eps),
            AnyParams::Conv2d(_) => param_conv2d_tape(t, &Conv2dVars::from_vars(vars).ok_or_else(bad)?, gin, rep, rho_pool, eps),
            AnyParams::Conv2dMax(_) => param_conv2d_max_tape(t, &Conv2dMaxVars::from_vars(vars).ok_or_else(bad)?, gin, rep, rho_pool, eps),
        }
    }

    /// Materialized layer with the stored values as constants.
    pub fn materialize(&self, gin: &GainFactor, rep: usize, rho_pool: f64, eps: f64, lq: Option<&Mat>) -> Result<MaterializedLayer> {
        let mut t = Tape::new();
        let vars: Vec<Var> = self.tensors().into_iter().map(|m| t.constant(m.clone())).collect();
        let g = Gain::constant(&mut t, gin);
        let tl = self.tape_layer(&mut t, &vars, g, rep, rho_pool, eps, lq)?;
        Ok(MaterializedLayer::from_tape(&t, &tl))
    }
}
