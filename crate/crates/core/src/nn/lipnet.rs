use alloc::format;
use alloc::string::String;

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::plain::{folded_conv_tape, Activation, PlainLayer, PlainNetwork, Shape};
use crate::arch::{ArchSpec, Token};
use crate::autodiff::{Pool2d, PoolKind, Tape, Var};
use crate::cert::{certify_network, pooling_gain, Certificate, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::layers::*;
use crate::linalg::Mat;
use crate::statespace::{kernel_from_realization_2d, kernel_to_strided, Padding};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolPlan {
    pub kind: PoolKind,
    pub window: usize,
    pub stride: usize,
    pub rho: f64,
}

/// Geometry of one parameterized layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerPlan {
    /// Stride-`stride` convolution evaluated as a stride-1 convolution of
    /// order `r` on the space-to-depth folded input.
    Conv {
        h: usize,
        w: usize,
        c_in: usize,
        c: usize,
        stride: usize,
        r: usize,
        offset: isize,
        pool: Option<PoolPlan>,
    },
    Fc { c_in: usize, rep: usize, c: usize, last: bool },
}

impl LayerPlan {
    /// Folded input channels and the Kronecker repeat of the incoming gain.
    fn fold(&self) -> usize {
        match *self {
            LayerPlan::Conv { stride, .. } => stride * stride,
            LayerPlan::Fc { rep, .. } => rep,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Fc(FcParams),
    LastFc(LastFcParams),
    Conv2d(Conv2dParams),
    Conv2dMax(Conv2dMaxParams),
}

#[derive(Debug, Clone)]
pub enum LayerVars {
    Fc(FcVars),
    LastFc(LastFcVars),
    Conv2d(Conv2dVars),
    Conv2dMax(Conv2dMaxVars),
}

impl LayerVars {
    pub fn all(&self) -> Vec<Var> {
        match self {
            LayerVars::Fc(v) => v.all(),
            LayerVars::LastFc(v) => v.all(),
            LayerVars::Conv2d(v) => v.all(),
            LayerVars::Conv2dMax(v) => v.all(),
        }
    }

    /// Same variant holding `vs` instead.
    pub fn with_vars(&self, vs: &[Var]) -> Option<LayerVars> {
        Some(match self {
            LayerVars::Fc(_) => LayerVars::Fc(FcVars::from_vars(vs)?),
            LayerVars::LastFc(_) => LayerVars::LastFc(LastFcVars::from_vars(vs)?),
            LayerVars::Conv2d(_) => LayerVars::Conv2d(Conv2dVars::from_vars(vs)?),
            LayerVars::Conv2dMax(_) => LayerVars::Conv2dMax(Conv2dMaxVars::from_vars(vs)?),
        })
    }
}

impl LayerParams {
    pub fn names(&self) -> &'static [&'static str] {
        match self {
            LayerParams::Fc(_) => FcParams::NAMES,
            LayerParams::LastFc(_) => LastFcParams::NAMES,
            LayerParams::Conv2d(_) => Conv2dParams::NAMES,
            LayerParams::Conv2dMax(_) => Conv2dMaxParams::NAMES,
        }
    }

    pub fn tensors(&self) -> Vec<&Mat> {
        match self {
            LayerParams::Fc(p) => p.tensors(),
            LayerParams::LastFc(p) => p.tensors(),
            LayerParams::Conv2d(p) => p.tensors(),
            LayerParams::Conv2dMax(p) => p.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        match self {
            LayerParams::Fc(p) => p.tensors_mut(),
            LayerParams::LastFc(p) => p.tensors_mut(),
            LayerParams::Conv2d(p) => p.tensors_mut(),
            LayerParams::Conv2dMax(p) => p.tensors_mut(),
        }
    }

    fn vars(&self, t: &mut Tape, leaves: bool) -> LayerVars {
        macro_rules! mk {
            ($p:expr, $v:ident) => {
                LayerVars::$v(if leaves { $p.leaves(t) } else { $p.constants(t) })
            };
        }
        match self {
            LayerParams::Fc(p) => mk!(p, Fc),
            LayerParams::LastFc(p) => mk!(p, LastFc),
            LayerParams::Conv2d(p) => mk!(p, Conv2d),
            LayerParams::Conv2dMax(p) => mk!(p, Conv2dMax),
        }
    }
}

/// Lipschitz-bounded network held as free variables plus its geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct LipNetwork {
    pub arch: ArchSpec,
    pub input: Shape,
    pub act: Activation,
    /// Factor of the input metric `R`; `ρI` in the scalar case.
    pub l0: GainFactor,
    /// Factor of the output metric `Q`; `None` means `Q = I`.
    pub lq: Option<Mat>,
    pub eps: f64,
    pub plan: Vec<LayerPlan>,
    pub params: Vec<LayerParams>,
}

/// Layer geometry implied by an architecture on a given input.
pub fn plan_layers(arch: &ArchSpec, input: Shape) -> Result<Vec<LayerPlan>> {
    let toks = &arch.tokens;
    if !matches!(toks.last(), Some(Token::Fc { .. })) {
        return Err(Error::Shape("architecture must end in a fully connected layer".into()));
    }
    let mut plan = Vec::new();
    let mut s = input;
    let mut i = 0;
    while i < toks.len() {
        match toks[i] {
            Token::Conv { channels, kernel, stride } => {
                let Shape::Image { h, w, c } = s else {
                    return Err(Error::Shape(format!("layer {i}: convolution on a vector input")));
                };
                if h % stride != 0 || w % stride != 0 {
                    return Err(Error::Shape(format!("layer {i}: {h}x{w} not divisible by stride {stride}")));
                }
                let r = kernel.div_ceil(stride) - 1;
                let (ho, wo) = (h / stride, w / stride);
                let mut pool = None;
                let mut out = (ho, wo);
                if let Some(&Token::Pool { kind, window, stride: ps }) = toks.get(i + 1) {
                    if ho < window || wo < window {
                        return Err(Error::Shape(format!("layer {}: pool window {window} on {ho}x{wo}", i + 1)));
                    }
                    let rho = pooling_gain(kind, (window, window), (ps, ps), (ho, wo))?;
                    pool = Some(PoolPlan { kind, window, stride: ps, rho });
                    out = ((ho - window) / ps + 1, (wo - window) / ps + 1);
                    i += 1;
                }
                plan.push(LayerPlan::Conv { h, w, c_in: c, c: channels, stride, r, offset: r.div_ceil(2) as isize, pool });
                s = Shape::Image { h: out.0, w: out.1, c: channels };
            }
            Token::Fc { units } => {
                let (c_in, rep) = match s {
                    Shape::Image { h, w, c } => (h * w * c, h * w),
                    Shape::Vector(n) => (n, 1),
                };
                plan.push(LayerPlan::Fc { c_in, rep, c: units, last: i + 1 == toks.len() });
                s = Shape::Vector(units);
            }
            Token::Pool { .. } => return Err(Error::Shape(format!("layer {i}: pooling must follow a convolution"))),
        }
        i += 1;
    }
    Ok(plan)
}

fn init_params(plan: &[LayerPlan], seed: u64) -> Vec<LayerParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    plan.iter()
        .map(|p| match *p {
            LayerPlan::Conv { c_in, c, stride, r, pool, .. } => {
                let cf = c_in * stride * stride;
                match pool {
                    Some(PoolPlan { kind: PoolKind::Max, .. }) => LayerParams::Conv2dMax(Conv2dMaxParams::init(c, cf, r, r, &mut rng)),
                    _ => LayerParams::Conv2d(Conv2dParams::init(c, cf, r, r, &mut rng)),
                }
            }
            LayerPlan::Fc { c_in, c, last: true, .. } => LayerParams::LastFc(LastFcParams::init(c, c_in, &mut rng)),
            LayerPlan::Fc { c_in, c, .. } => LayerParams::Fc(FcParams::init(c, c_in, &mut rng)),
        })
        .collect()
}

/// Index map from the stacked block `[A12 B1; C2 D]` to the patch-matrix
/// form of the kernel, `Kmat[(t·c_in + ci), co] = K[t][co, ci]`.
fn kernel_gather(d: LayerDims) -> Vec<u32> {
    let (c, ci_n, r1, r2) = (d.c, d.c_in, d.r1, d.r2);
    let wcols = r2 * ci_n + ci_n;
    let mut idx = Vec::with_capacity((r1 + 1) * (r2 + 1) * ci_n * c);
    for t1 in 0..=r1 {
        for t2 in 0..=r2 {
            for ci in 0..ci_n {
                for co in 0..c {
                    let row = (r1 - t1) * c + co;
                    let col = (r2 - t2) * ci_n + ci;
                    idx.push((row * wcols + col) as u32);
                }
            }
        }
    }
    idx
}

impl LipNetwork {
    /// Network with `R = ρ²I`, `Q = I` and freshly initialized variables.
    pub fn new(arch: ArchSpec, input: Shape, act: Activation, rho: f64, eps: f64, seed: u64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::InvalidSpec(format!("rho must be positive, got {rho}")));
        }
        let l0 = GainFactor::scaled_identity(input.channels(), rho);
        Self::with_metrics(arch, input, act, l0, None, eps, seed)
    }

    pub fn with_metrics(arch: ArchSpec, input: Shape, act: Activation, l0: GainFactor, lq: Option<Mat>, eps: f64, seed: u64) -> Result<Self> {
        let plan = plan_layers(&arch, input)?;
        if l0.dim() != input.channels() {
            return Err(Error::Shape(format!("R factor is {0}x{0}, input has {1} channels", l0.dim(), input.channels())));
        }
        let out = match plan.last() {
            Some(LayerPlan::Fc { c, .. }) => *c,
            _ => 0,
        };
        if let Some(lq) = &lq {
            if lq.rows() != out || lq.cols() != out {
                return Err(Error::Shape(format!("Q factor is {}x{}, output has {out} entries", lq.rows(), lq.cols())));
            }
        }
        let params = init_params(&plan, seed);
        Ok(LipNetwork { arch, input, act, l0, lq, eps, plan, params })
    }

    /// `ρ` when `R = ρ²I` and `Q = I`.
    pub fn rho(&self) -> Option<f64> {
        let l = &self.l0.l;
        let r = l[(0, 0)];
        let scalar = self.lq.is_none() && l.max_abs_diff(&Mat::identity(l.rows()).scale(r)) == 0.0;
        scalar.then_some(r.abs())
    }

    pub fn lq_or_identity(&self) -> Mat {
        self.lq.clone().unwrap_or_else(|| Mat::identity(self.output_dim()))
    }

    pub fn output_dim(&self) -> usize {
        match self.plan.last() {
            Some(LayerPlan::Fc { c, .. }) => *c,
            _ => 0,
        }
    }

    /// Named tensors in a fixed order, `layer{k}.{name}`.
    pub fn named_tensors(&self) -> Vec<(String, &Mat)> {
        let mut out = Vec::new();
        for (k, p) in self.params.iter().enumerate() {
            for (n, m) in p.names().iter().zip(p.tensors()) {
                out.push((format!("layer{k}.{n}"), m));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        self.params.iter_mut().flat_map(|p| p.tensors_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flat_map(|p| p.tensors()).map(|m| m.len()).sum()
    }

    /// Puts the free variables on the tape, as leaves when `trainable`.
    pub fn vars(&self, t: &mut Tape, trainable: bool) -> Vec<LayerVars> {
        self.params.iter().map(|p| p.vars(t, trainable)).collect()
    }

    /// Groups flat variables, in [`Self::named_tensors`] order, by layer.
    pub fn split_vars(&self, flat: &[Var]) -> Result<Vec<LayerVars>> {
        let mut out = Vec::with_capacity(self.params.len());
        let mut pos = 0;
        for p in &self.params {
            let n = p.names().len();
            let chunk = flat.get(pos..pos + n).ok_or_else(|| Error::InvalidSpec(format!("{} variables supplied", flat.len())))?;
            let kind = match p {
                LayerParams::Fc(_) => FcVars::from_vars(chunk).map(LayerVars::Fc),
                LayerParams::LastFc(_) => LastFcVars::from_vars(chunk).map(LayerVars::LastFc),
                LayerParams::Conv2d(_) => Conv2dVars::from_vars(chunk).map(LayerVars::Conv2d),
                LayerParams::Conv2dMax(_) => Conv2dMaxVars::from_vars(chunk).map(LayerVars::Conv2dMax),
            };
            out.push(kind.ok_or_else(|| Error::InvalidSpec("variable count does not match the layer".into()))?);
            pos += n;
        }
        if pos != flat.len() {
            return Err(Error::InvalidSpec(format!("{} variables supplied, {pos} expected", flat.len())));
        }
        Ok(out)
    }

    /// Runs every parameterization, chaining the gains from `L₀`.
    pub fn tape_layers(&self, t: &mut Tape, vars: &[LayerVars]) -> Result<Vec<TapeLayer>> {
        let mut gain = Gain::constant(t, &self.l0);
        let mut out = Vec::with_capacity(vars.len());
        for (k, (plan, v)) in self.plan.iter().zip(vars).enumerate() {
            let rep = plan.fold();
            let eps = self.eps;
            let tl = match (plan, v) {
                (LayerPlan::Conv { pool, .. }, LayerVars::Conv2d(v)) => {
                    param_conv2d_tape(t, v, gain, rep, pool.map_or(1.0, |p| p.rho), eps)?
                }
                (LayerPlan::Conv { pool: Some(p), .. }, LayerVars::Conv2dMax(v)) => param_conv2d_max_tape(t, v, gain, rep, p.rho, eps)?,
                (LayerPlan::Fc { last: false, .. }, LayerVars::Fc(v)) => param_fc_tape(t, v, gain, rep)?,
                (LayerPlan::Fc { last: true, .. }, LayerVars::LastFc(v)) => param_last_fc_tape(t, v, gain, rep, self.lq.as_ref())?,
                _ => return Err(Error::Shape(format!("layer {k}: parameters do not match the plan"))),
            };
            if let Some(g) = tl.gain {
                gain = g;
            }
            out.push(tl);
        }
        Ok(out)
    }

    /// Forward pass through parameterized layers; `x` holds one flattened sample per row.
    pub fn forward_tape(&self, t: &mut Tape, layers: &[TapeLayer], x: Var) -> Result<Var> {
        let batch = x.rows();
        let mut cur = match self.input {
            Shape::Image { h, w, c } => t.reshape(x, batch * h * w, c)?,
            Shape::Vector(_) => x,
        };
        let mut spatial = matches!(self.input, Shape::Image { .. });
        for (plan, tl) in self.plan.iter().zip(layers) {
            match *plan {
                LayerPlan::Conv { h, w, c_in, stride, r, offset, pool, .. } => {
                    let idx = kernel_gather(tl.dims);
                    let rows = idx.len() / tl.dims.c;
                    let kmat = t.gather(tl.weight, idx, rows, tl.dims.c)?;
                    let y = folded_conv_tape(t, cur, kmat, tl.bias, batch, (h, w, c_in), (r, r), (stride, stride), (offset, offset))?;
                    let mut y = self.act.apply(t, y);
                    if let Some(p) = pool {
                        let g = Pool2d { kind: p.kind, batch, h: h / stride, w: w / stride, window: (p.window, p.window), stride: (p.stride, p.stride) };
                        y = t.pool(y, g)?;
                    }
                    cur = y;
                }
                LayerPlan::Fc { c_in, last, .. } => {
                    if spatial {
                        cur = t.reshape(cur, batch, c_in)?;
                        spatial = false;
                    }
                    let wt = t.transpose(tl.weight);
                    let y = t.matmul(cur, wt)?;
                    let y = t.add_row(y, tl.bias)?;
                    cur = if last { y } else { self.act.apply(t, y) };
                }
            }
        }
        Ok(cur)
    }

    /// Plain-valued layers with their certificate multipliers.
    pub fn materialize(&self) -> Result<Vec<MaterializedLayer>> {
        let mut t = Tape::new();
        let vars = self.vars(&mut t, false);
        let layers = self.tape_layers(&mut t, &vars)?;
        Ok(layers.iter().map(|l| MaterializedLayer::from_tape(&t, l)).collect())
    }

    pub fn certify(&self, tol: f64) -> Result<Certificate> {
        certify_network(&self.materialize()?, &self.l0, &self.lq_or_identity(), tol)
    }

    /// Forward pass with the free variables held constant.
    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        let mut t = Tape::new();
        let vars = self.vars(&mut t, false);
        let layers = self.tape_layers(&mut t, &vars)?;
        let xv = t.constant(x.clone());
        let y = self.forward_tape(&mut t, &layers, xv)?;
        Ok(t.value(y).clone())
    }

    /// Standard-form network: kernels extracted from the realizations, with
    /// the certificate of the materialized layers attached.
    pub fn export(&self) -> Result<PlainNetwork> {
        let mats = self.materialize()?;
        let cert = certify_network(&mats, &self.l0, &self.lq_or_identity(), DEFAULT_TOL)?;
        let mut net = self.plain_from(&mats)?;
        net.certificate = Some(cert);
        Ok(net)
    }

    /// [`Self::export`] without computing the certificate.
    pub fn to_plain(&self) -> Result<PlainNetwork> {
        self.plain_from(&self.materialize()?)
    }

    fn plain_from(&self, mats: &[MaterializedLayer]) -> Result<PlainNetwork> {
        let mut layers = Vec::new();
        let mut spatial = matches!(self.input, Shape::Image { .. });
        for (plan, m) in self.plan.iter().zip(mats) {
            match (*plan, &m.weights) {
                (LayerPlan::Conv { stride, offset, pool, .. }, Weights::Conv2d(real)) => {
                    let folded = kernel_from_realization_2d(real)?;
                    let (kernel, off) = if stride == 1 {
                        (folded, (offset, offset))
                    } else {
                        kernel_to_strided(&folded, stride, stride, (offset, offset))?
                    };
                    layers.push(PlainLayer::Conv { kernel, bias: m.bias.clone(), padding: Padding::Offset(off.0, off.1) });
                    layers.push(PlainLayer::Act(self.act));
                    if let Some(p) = pool {
                        layers.push(PlainLayer::Pool { kind: p.kind, window: (p.window, p.window), stride: (p.stride, p.stride) });
                    }
                }
                (LayerPlan::Fc { last, .. }, Weights::Fc(w)) => {
                    if spatial {
                        layers.push(PlainLayer::Flatten);
                        spatial = false;
                    }
                    layers.push(PlainLayer::Fc { w: w.clone(), bias: m.bias.clone() });
                    if !last {
                        layers.push(PlainLayer::Act(self.act));
                    }
                }
                _ => return Err(Error::Shape("materialized layer does not match the plan".into())),
            }
        }
        let mut net = PlainNetwork::new(self.input, layers)?;
        net.rho = self.rho();
        Ok(net)
    }
}

/// All free variables of a network in [`LipNetwork::named_tensors`] order.
pub fn flat_vars(vars: &[LayerVars]) -> Vec<Var> {
    vars.iter().flat_map(|v| v.all()).collect()
}

