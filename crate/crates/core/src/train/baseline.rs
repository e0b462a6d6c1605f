#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{accuracy, loss_tape, Adam, MetricsLog, MetricsRow, TrainConfig};
use crate::arch::Token;
use crate::autodiff::Tape;
use crate::data::{batches, Dataset, Targets};
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, Mat};
use crate::nn::{PlainLayer, PlainNetwork, Shape};

/// `W · min(1, budget/σ_max(W))`.
pub fn project_spectral(w: &Mat, budget: f64) -> Mat {
    let s = spectral_norm(w);
    if s > budget {
        w.scale(budget / s)
    } else {
        w.clone()
    }
}

/// Trains an unconstrained fully connected network, rescaling each weight
/// after every step so that its spectral norm stays within `ρ^(1/l)`.
pub fn spectral_baseline_train(cfg: &TrainConfig, ds: &Dataset) -> Result<(PlainNetwork, MetricsLog)> {
    cfg.validate()?;
    let Shape::Vector(n_in) = ds.shape else {
        return Err(Error::InvalidSpec("the spectral baseline takes vector inputs".into()));
    };
    let mut widths = vec![n_in];
    for tok in &cfg.arch.tokens {
        match tok {
            Token::Fc { units } => widths.push(*units),
            _ => return Err(Error::InvalidSpec("the spectral baseline supports fully connected layers only".into())),
        }
    }
    let depth = widths.len() - 1;
    let budget = cfg.rho.powf(1.0 / depth as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params: Vec<Mat> = Vec::with_capacity(2 * depth);
    for k in 0..depth {
        let d = Normal::new(0.0, (1.0 / widths[k] as f64).sqrt()).expect("valid normal");
        let w = Mat::from_fn(widths[k + 1], widths[k], |_, _| d.sample(&mut rng));
        params.push(project_spectral(&w, budget));
        params.push(Mat::zeros(1, widths[k + 1]));
    }
    let mut opt = Adam::new(cfg.optimizer);
    let mut log = MetricsLog::default();
    for epoch in 1..=cfg.epochs {
        let (mut total, mut hits, mut seen) = (0.0, 0.0, 0usize);
        let shuffle = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64);
        for (step, b) in batches(ds, cfg.batch, Some(shuffle))?.enumerate() {
            let mut t = Tape::new();
            let vars: Vec<_> = params.iter().map(|m| t.leaf(m.clone())).collect();
            let mut cur = t.constant(b.inputs.clone());
            for k in 0..depth {
                let wt = t.transpose(vars[2 * k]);
                let y = t.matmul(cur, wt)?;
                let y = t.add_row(y, vars[2 * k + 1])?;
                cur = if k + 1 < depth { cfg.act.apply(&mut t, y) } else { y };
            }
            let loss = loss_tape(&mut t, cur, &b.targets, cfg.loss)?;
            let lv = t.scalar(loss);
            if !lv.is_finite() {
                return Err(Error::DivergedLoss { epoch, step });
            }
            let g = t.backward(loss)?;
            let grads: Vec<Mat> = vars.iter().map(|&v| g.get(v)).collect();
            let n = b.indices.len();
            total += lv * n as f64;
            if let Targets::Labels(l) = &b.targets {
                hits += accuracy(t.value(cur), l) * n as f64;
            }
            seen += n;
            opt.step(params.iter_mut().collect(), &grads)?;
            for k in 0..depth {
                params[2 * k] = project_spectral(&params[2 * k], budget);
            }
        }
        let denom = seen.max(1) as f64;
        let is_cls = matches!(ds.targets, Targets::Labels(_));
        log.rows.push(MetricsRow { epoch, split: "train", loss: total / denom, accuracy: is_cls.then_some(hits / denom) });
    }
    let mut layers = Vec::with_capacity(2 * depth);
    for k in 0..depth {
        layers.push(PlainLayer::Fc { w: params[2 * k].clone(), bias: params[2 * k + 1].data().to_vec() });
        if k + 1 < depth {
            layers.push(PlainLayer::Act(cfg.act));
        }
    }
    let mut net = PlainNetwork::new(ds.shape, layers)?;
    net.rho = Some(cfg.rho);
    Ok((net, log))
}
