//! First-order training over the free variables, the spectral-norm baseline,
//! and the ℓ2 PGD attack.

mod attack;
mod baseline;
mod optim;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::arch::ArchSpec;
use crate::autodiff::{Tape, Var};
use crate::cert::lmi_penalty;
use crate::data::{batches, Dataset, Targets};
use crate::error::{Error, Result};
use crate::layers::{GainFactor, TapeLayer, DEFAULT_EPS};
use crate::linalg::Mat;
use crate::nn::{flat_vars, Activation, LipNetwork, PlainNetwork};

pub use attack::{pgd_attack, PgdConfig};
pub use baseline::{project_spectral, spectral_baseline_train};
pub use optim::{Adam, AdamConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::CrossEntropy => "cross-entropy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub arch: ArchSpec,
    pub rho: f64,
    /// Replaces `ρI` as the input factor `L₀` when set.
    pub l0: Option<GainFactor>,
    pub lq: Option<Mat>,
    pub act: Activation,
    pub optimizer: AdamConfig,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub eps_gramian: f64,
    pub loss: LossKind,
}

impl TrainConfig {
    pub fn new(arch: ArchSpec, rho: f64, loss: LossKind) -> Self {
        TrainConfig {
            arch,
            rho,
            l0: None,
            lq: None,
            act: Activation::Relu,
            optimizer: AdamConfig::default(),
            epochs: 1,
            batch: 64,
            seed: 0,
            eps_gramian: DEFAULT_EPS,
            loss,
        }
    }

    /// A zero learning rate is accepted; it freezes the free variables.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        let lr = self.optimizer.lr;
        if !(lr >= 0.0) || !lr.is_finite() {
            return bad(format!("learning rate must be non-negative, got {lr}"));
        }
        if self.batch == 0 {
            return bad("batch size must be >= 1".into());
        }
        if !(self.eps_gramian > 0.0) {
            return bad(format!("gramian epsilon must be positive, got {}", self.eps_gramian));
        }
        Ok(())
    }

    /// Freshly initialized network for inputs of `ds`.
    pub fn network(&self, ds: &Dataset) -> Result<LipNetwork> {
        self.validate()?;
        match &self.l0 {
            None if self.lq.is_none() => LipNetwork::new(self.arch.clone(), ds.shape, self.act, self.rho, self.eps_gramian, self.seed),
            _ => {
                let l0 = self.l0.clone().unwrap_or_else(|| GainFactor::scaled_identity(ds.shape.channels(), self.rho));
                LipNetwork::with_metrics(self.arch.clone(), ds.shape, self.act, l0, self.lq.clone(), self.eps_gramian, self.seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub split: &'static str,
    pub loss: f64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    /// `epoch,split,loss,accuracy`; accuracy is empty for regression.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,split,loss,accuracy\n");
        for r in &self.rows {
            let acc = r.accuracy.map(|a| format!("{a}")).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{}", r.epoch, r.split, r.loss, acc);
        }
        s
    }

    pub fn last(&self, split: &str) -> Option<&MetricsRow> {
        self.rows.iter().rev().find(|r| r.split == split)
    }
}

/// Task loss of `out` against `targets` on the tape.
pub fn loss_tape(t: &mut Tape, out: Var, targets: &Targets, kind: LossKind) -> Result<Var> {
    match (kind, targets) {
        (LossKind::CrossEntropy, Targets::Labels(l)) => t.softmax_cross_entropy(out, l),
        (LossKind::Mse, Targets::Values(y)) => {
            let yv = t.constant(y.clone());
            let d = t.sub(out, yv)?;
            let sq = t.square(d);
            let s = t.sum(sq);
            Ok(t.scale(s, 1.0 / y.len().max(1) as f64))
        }
        (LossKind::Mse, Targets::Labels(l)) => {
            let k = out.cols();
            let y = Mat::from_fn(l.len(), k, |i, j| if l[i] == j { 1.0 } else { 0.0 });
            loss_tape(t, out, &Targets::Values(y), kind)
        }
        (LossKind::CrossEntropy, Targets::Values(_)) => Err(Error::InvalidSpec("cross-entropy needs class labels".into())),
    }
}

/// Loss on plain values, plus the accuracy when the targets are labels.
pub fn loss_value(out: &Mat, targets: &Targets, kind: LossKind) -> Result<(f64, Option<f64>)> {
    let mut t = Tape::new();
    let o = t.constant(out.clone());
    let l = loss_tape(&mut t, o, targets, kind)?;
    let acc = match targets {
        Targets::Labels(l) => Some(accuracy(out, l)),
        Targets::Values(_) => None,
    };
    Ok((t.scalar(l), acc))
}

/// Fraction of rows whose largest entry sits at the label.
pub fn accuracy(logits: &Mat, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels.iter().enumerate().filter(|&(i, &y)| argmax(logits.row_slice(i)) == y).count();
    hits as f64 / labels.len() as f64
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Loss and accuracy of a plain network on a dataset.
pub fn evaluate(net: &PlainNetwork, ds: &Dataset, kind: LossKind) -> Result<(f64, Option<f64>)> {
    let out = net.forward_batched(&ds.inputs, 256)?;
    loss_value(&out, &ds.targets, kind)
}

/// Task loss plus `mu` times [`lmi_penalty`] of the parameterized layers.
pub fn regularized_loss(t: &mut Tape, net: &LipNetwork, layers: &[TapeLayer], x: Var, targets: &Targets, kind: LossKind, mu: f64) -> Result<Var> {
    let out = net.forward_tape(t, layers, x)?;
    let task = loss_tape(t, out, targets, kind)?;
    let pen = lmi_penalty(t, layers, net.lq.as_ref())?;
    let pen = t.scale(pen, mu);
    t.add(task, pen)
}

/// One gradient evaluation: loss value and gradients in
/// [`LipNetwork::named_tensors`] order.
pub fn loss_and_grad(net: &LipNetwork, x: &Mat, targets: &Targets, kind: LossKind) -> Result<(f64, Mat, Vec<Mat>)> {
    let mut t = Tape::new();
    let vars = net.vars(&mut t, true);
    let layers = net.tape_layers(&mut t, &vars)?;
    let xv = t.constant(x.clone());
    let out = net.forward_tape(&mut t, &layers, xv)?;
    let loss = loss_tape(&mut t, out, targets, kind)?;
    let g = t.backward(loss)?;
    let grads = flat_vars(&vars).into_iter().map(|v| g.get(v)).collect();
    Ok((t.scalar(loss), t.value(out).clone(), grads))
}

/// Trains a fresh network built from `cfg`, evaluating on `eval` after each epoch.
pub fn train(cfg: &TrainConfig, ds: &Dataset, eval: Option<&Dataset>) -> Result<(LipNetwork, MetricsLog)> {
    let mut net = cfg.network(ds)?;
    let log = train_network(&mut net, cfg, ds, eval)?;
    Ok((net, log))
}

/// Continues training `net` in place with the optimizer settings of `cfg`.
pub fn train_network(net: &mut LipNetwork, cfg: &TrainConfig, ds: &Dataset, eval: Option<&Dataset>) -> Result<MetricsLog> {
    cfg.validate()?;
    let mut opt = Adam::new(cfg.optimizer);
    let mut log = MetricsLog::default();
    for epoch in 1..=cfg.epochs {
        let (mut total, mut hits, mut seen) = (0.0, 0.0, 0usize);
        let shuffle = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64);
        for (step, b) in batches(ds, cfg.batch, Some(shuffle))?.enumerate() {
            let (loss, out, grads) = loss_and_grad(net, &b.inputs, &b.targets, cfg.loss)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::DivergedLoss { epoch, step });
            }
            let n = b.indices.len();
            total += loss * n as f64;
            if let Targets::Labels(l) = &b.targets {
                hits += accuracy(&out, l) * n as f64;
            }
            seen += n;
            opt.step(net.tensors_mut(), &grads)?;
        }
        let is_cls = matches!(ds.targets, Targets::Labels(_));
        let denom = seen.max(1) as f64;
        log.rows.push(MetricsRow { epoch, split: "train", loss: total / denom, accuracy: is_cls.then_some(hits / denom) });
        if let Some(ev) = eval {
            let (loss, accuracy) = evaluate(&net.to_plain()?, ev, cfg.loss)?;
            log.rows.push(MetricsRow { epoch, split: "test", loss, accuracy });
        }
    }
    Ok(log)
}
