use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::lmi::{lmi_conv, lmi_fc, lmi_fc_reduced, lmi_last, lmi_last_reduced, passes};
use crate::error::{Error, Result};
use crate::layers::{GainFactor, LayerKind, MaterializedLayer, Weights};
use crate::linalg::{min_eig_sym, Mat};

/// FC and last-layer LMIs larger than this are checked through their Schur complement.
pub const REDUCE_ABOVE: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub name: String,
    pub dim: usize,
    pub min_eig: f64,
    pub norm: f64,
    /// Checked through the Schur complement of the input block.
    pub reduced: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub layers: Vec<LayerRecord>,
    /// Set when `R = ρ²I` and `Q = I`.
    pub rho: Option<f64>,
    pub tol: f64,
    pub certified: bool,
}

impl Certificate {
    pub fn min_eig(&self) -> f64 {
        self.layers.iter().map(|r| r.min_eig).fold(f64::INFINITY, f64::min)
    }

    /// Human-readable per-layer table.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<16} {:>6} {:>14}  {}", "layer", "dim", "min eig", "status");
        for r in &self.layers {
            let dim = if r.reduced { format!("{}*", r.dim) } else { format!("{}", r.dim) };
            let _ = writeln!(s, "{:<16} {:>6} {:>14.6e}  {}", r.name, dim, r.min_eig, if r.pass { "ok" } else { "FAIL" });
        }
        if self.layers.iter().any(|r| r.reduced) {
            let _ = writeln!(s, "(* Schur complement of the input block)");
        }
        match self.rho {
            Some(rho) => {
                let _ = writeln!(s, "Lipschitz bound: {rho}");
            }
            None => {
                let _ = writeln!(s, "Lipschitz bound: (Q,R) metric");
            }
        }
        let _ = writeln!(s, "verdict: {}", if self.certified { "CERTIFIED" } else { "NOT CERTIFIED" });
        s
    }

    /// Inverse of [`Self::render_kv`].
    pub fn parse_kv(text: &str) -> Option<Certificate> {
        let kv: BTreeMap<&str, &str> = text.lines().filter_map(|l| l.split_once('=')).collect();
        let get = |k: &str| kv.get(k).copied();
        let n: usize = get("layers")?.parse().ok()?;
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            let f = |name: &str| get(&format!("layer.{i}.{name}"));
            layers.push(LayerRecord {
                name: f("name")?.into(),
                dim: f("dim")?.parse().ok()?,
                min_eig: f("min_eig")?.parse().ok()?,
                norm: f("norm").map_or(Some(0.0), |v| v.parse().ok())?,
                reduced: f("reduced")?.parse().ok()?,
                pass: f("pass")?.parse().ok()?,
            });
        }
        Some(Certificate {
            layers,
            rho: match get("rho") {
                Some(r) => Some(r.parse().ok()?),
                None => None,
            },
            tol: get("tol")?.parse().ok()?,
            certified: get("certified")?.parse().ok()?,
        })
    }

    /// Machine-readable `key=value` lines.
    pub fn render_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "certified={}", self.certified);
        if let Some(rho) = self.rho {
            let _ = writeln!(s, "rho={rho}");
        }
        let _ = writeln!(s, "tol={:e}", self.tol);
        let _ = writeln!(s, "layers={}", self.layers.len());
        for (i, r) in self.layers.iter().enumerate() {
            let _ = writeln!(s, "layer.{i}.name={}", r.name);
            let _ = writeln!(s, "layer.{i}.dim={}", r.dim);
            let _ = writeln!(s, "layer.{i}.reduced={}", r.reduced);
            let _ = writeln!(s, "layer.{i}.min_eig={:e}", r.min_eig);
            let _ = writeln!(s, "layer.{i}.norm={:e}", r.norm);
            let _ = writeln!(s, "layer.{i}.pass={}", r.pass);
        }
        s
    }
}

/// The LMI of one materialized layer, built from its own multipliers.
///
/// Returns the matrix and whether it is the Schur-reduced form.
pub fn layer_lmi(layer: &MaterializedLayer, lq: &Mat) -> Result<(Mat, bool)> {
    let xm0 = layer.gain_in.metric();
    let out_metric = || {
        layer
            .gain
            .as_ref()
            .map(|g| g.metric())
            .ok_or_else(|| Error::Shape(format!("{} layer without outgoing gain", layer.kind.name())))
    };
    match (&layer.weights, layer.kind) {
        (Weights::Fc(w), LayerKind::LastFc) => {
            if w.cols() > REDUCE_ABOVE {
                Ok((lmi_last_reduced(w, &xm0, lq, layer.rep)?, true))
            } else {
                Ok((lmi_last(w, &xm0, &lq.tmul(lq), Some(layer.rep))?, false))
            }
        }
        (Weights::Fc(w), _) => {
            let x = out_metric()?;
            if w.rows() + w.cols() > REDUCE_ABOVE {
                Ok((lmi_fc_reduced(w, &layer.lambda, &xm0, &x, layer.rep)?, true))
            } else {
                Ok((lmi_fc(w, &layer.lambda, &xm0, &x, Some(layer.rep))?, false))
            }
        }
        (Weights::Conv1d(r), _) => {
            let x = out_metric()?;
            let p = layer.p.first().ok_or_else(|| Error::Shape("conv1d layer without P".into()))?;
            Ok((lmi_conv(r, p, &layer.lambda, &xm0.kron_eye(layer.rep), &x, layer.rho_pool)?, false))
        }
        (Weights::Conv2d(r), _) => {
            let x = out_metric()?;
            if layer.p.len() != 2 {
                return Err(Error::Shape("conv2d layer needs P1 and P2".into()));
            }
            let p = Mat::blkdiag(&[&layer.p[0], &layer.p[1]]);
            Ok((lmi_conv(r, &p, &layer.lambda, &xm0.kron_eye(layer.rep), &x, layer.rho_pool)?, false))
        }
    }
}

fn record(name: String, m: &Mat, reduced: bool, tol: f64) -> Result<LayerRecord> {
    let min_eig = min_eig_sym(m)?;
    let norm = m.frobenius();
    Ok(LayerRecord { name, dim: m.rows(), min_eig, norm, reduced, pass: passes(min_eig, norm, tol) })
}

fn same_gain(a: &GainFactor, b: &GainFactor) -> bool {
    let scale = a.l.max_abs().max(1.0);
    a.l.shape() == b.l.shape() && a.diagonal == b.diagonal && a.l.max_abs_diff(&b.l) <= 1e-12 * scale
}

fn rho_of(l0: &GainFactor, lq: &Mat) -> Option<f64> {
    let n = l0.dim();
    if n == 0 || !l0.l.is_diagonal() || lq.max_abs_diff(&Mat::identity(lq.rows())) != 0.0 {
        return None;
    }
    let r = l0.l[(0, 0)];
    (0..n).all(|i| l0.l[(i, i)] == r).then_some(r.abs())
}

/// Checks every layer LMI with the layer's own multipliers.
///
/// `l0` factors the input metric `R`, `lq` the output metric `Q`. When the
/// chain does not end in an affine output layer, the final metric must
/// dominate `Q`, which is recorded as an extra `output` entry.
pub fn certify_network(layers: &[MaterializedLayer], l0: &GainFactor, lq: &Mat, tol: f64) -> Result<Certificate> {
    let mut records = Vec::new();
    let mut prev = l0.clone();
    let mut open = true;
    for (k, layer) in layers.iter().enumerate() {
        if !open {
            return Err(Error::ChainMismatch { layer: k, detail: "layer after the affine output layer".into() });
        }
        if !same_gain(&prev, &layer.gain_in) {
            return Err(Error::ChainMismatch {
                layer: k,
                detail: format!(
                    "incoming {}x{} (diagonal {}) vs emitted {}x{} (diagonal {})",
                    layer.gain_in.l.rows(),
                    layer.gain_in.l.cols(),
                    layer.gain_in.diagonal,
                    prev.l.rows(),
                    prev.l.cols(),
                    prev.diagonal
                ),
            });
        }
        let (m, reduced) = layer_lmi(layer, lq)?;
        records.push(record(format!("{}#{k}", layer.kind.name()), &m, reduced, tol)?);
        match &layer.gain {
            Some(g) => prev = g.clone(),
            None => open = false,
        }
    }
    if open {
        if prev.dim() != lq.rows() {
            return Err(Error::ChainMismatch {
                layer: layers.len(),
                detail: format!("final metric {} vs Q {}", prev.dim(), lq.rows()),
            });
        }
        let m = prev.metric().sub(&lq.tmul(lq))?.symmetrized();
        records.push(record("output".into(), &m, false, tol)?);
    }
    let certified = records.iter().all(|r| r.pass);
    Ok(Certificate { layers: records, rho: rho_of(l0, lq), tol, certified })
}
