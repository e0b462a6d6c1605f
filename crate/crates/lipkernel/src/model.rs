//! The `LPKN` model file: a text header with a tensor manifest followed by
//! little-endian `f64` data and a CRC32 of that data.
//!
//! Layout:
//!
//! ```text
//! "LPKN" | version: u32 LE | header length: u32 LE | header (UTF-8)
//!        | payload: f64 LE ... | crc32(payload): u32 LE
//! ```
//!
//! The header is a list of `key=value` lines, then `tensors=N` and one
//! `tensor <name> <rows> <cols> <byte offset>` line per tensor.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use lipkernel_core::arch::{parse_arch, render};
use lipkernel_core::autodiff::PoolKind;
use lipkernel_core::cert::Certificate;
use lipkernel_core::layers::GainFactor;
use lipkernel_core::linalg::Mat;
use lipkernel_core::nn::{Activation, LipNetwork, PlainLayer, PlainNetwork, Shape};
use lipkernel_core::statespace::{Kernel2D, Padding};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"LPKN";
pub const VERSION: u32 = 1;

/// Which kind of network the tensors describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    /// Free variables of a [`LipNetwork`]; can be re-materialized and trained.
    Phi,
    /// Kernels and weights of a [`PlainNetwork`]; inference only.
    Kernel,
}

impl Flavor {
    pub fn name(&self) -> &'static str {
        match self {
            Flavor::Phi => "phi",
            Flavor::Kernel => "kernel",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub flavor: Flavor,
    /// Ordered `key=value` entries.
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Mat)>,
}

fn header_err(m: impl Into<String>) -> Error {
    Error::Header(m.into())
}

impl ModelFile {
    pub fn new(flavor: Flavor) -> Self {
        ModelFile { flavor, meta: Vec::new(), tensors: Vec::new() }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn need(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| header_err(format!("missing key {key}")))
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Mat> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    fn need_tensor(&self, name: &str) -> Result<&Mat> {
        self.tensor(name).ok_or_else(|| header_err(format!("missing tensor {name}")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut header = format!("flavor={}\n", self.flavor.name());
        for (k, v) in &self.meta {
            if k.contains(['=', '\n']) || v.contains('\n') || k == "flavor" || k == "tensors" {
                return Err(header_err(format!("unusable header entry {k:?}")));
            }
            let _ = writeln!(header, "{k}={v}");
        }
        let _ = writeln!(header, "tensors={}", self.tensors.len());
        let mut offset = 0usize;
        for (name, m) in &self.tensors {
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(header_err(format!("unusable tensor name {name:?}")));
            }
            let _ = writeln!(header, "tensor {name} {} {} {offset}", m.rows(), m.cols());
            offset += m.len() * 8;
        }
        let mut out = Vec::with_capacity(12 + header.len() + offset + 4);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        let start = out.len();
        for (_, m) in &self.tensors {
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out[start..]);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let u32_at = |at: usize| -> Result<u32> {
            let s = bytes.get(at..at + 4).ok_or_else(|| header_err("file too short"))?;
            Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        };
        let magic: [u8; 4] = bytes.get(..4).ok_or_else(|| header_err("file too short"))?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = u32_at(4)?;
        if version != VERSION {
            return Err(Error::VersionMismatch { found: version, expected: VERSION });
        }
        let hlen = u32_at(8)? as usize;
        let header = bytes.get(12..12 + hlen).ok_or_else(|| header_err("header runs past the end"))?;
        let header = std::str::from_utf8(header).map_err(|_| header_err("header is not UTF-8"))?;
        let start = 12 + hlen;
        if bytes.len() < start + 4 {
            return Err(header_err("missing checksum"));
        }
        let payload = &bytes[start..bytes.len() - 4];
        let stored = u32_at(bytes.len() - 4)?;
        let found = crc32fast::hash(payload);
        if stored != found {
            return Err(Error::ChecksumMismatch { stored, found });
        }

        let mut lines = header.lines();
        let flavor = match lines.next() {
            Some("flavor=phi") => Flavor::Phi,
            Some("flavor=kernel") => Flavor::Kernel,
            other => return Err(header_err(format!("bad flavor line {other:?}"))),
        };
        let mut meta = Vec::new();
        let count = loop {
            let line = lines.next().ok_or_else(|| header_err("missing tensors= line"))?;
            let (k, v) = line.split_once('=').ok_or_else(|| header_err(format!("bad line {line:?}")))?;
            if k == "tensors" {
                break v.parse::<usize>().map_err(|_| header_err("bad tensor count"))?;
            }
            meta.push((k.to_string(), v.to_string()));
        };
        let mut tensors = Vec::with_capacity(count);
        let mut expect = 0usize;
        for _ in 0..count {
            let line = lines.next().ok_or_else(|| header_err("manifest shorter than tensors="))?;
            let f: Vec<&str> = line.split(' ').collect();
            let num = |s: &str| s.parse::<usize>().map_err(|_| header_err(format!("bad number in {line:?}")));
            if f.len() != 5 || f[0] != "tensor" {
                return Err(header_err(format!("bad manifest line {line:?}")));
            }
            let (rows, cols, off) = (num(f[2])?, num(f[3])?, num(f[4])?);
            if off != expect {
                return Err(header_err(format!("tensor {} at offset {off}, expected {expect}", f[1])));
            }
            let len = rows * cols * 8;
            let chunk = payload.get(off..off + len).ok_or_else(|| header_err(format!("tensor {} runs past the payload", f[1])))?;
            let data = chunk.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            tensors.push((f[1].to_string(), Mat::from_vec(rows, cols, data)));
            expect += len;
        }
        if lines.next().is_some() {
            return Err(header_err("trailing header lines"));
        }
        if expect != payload.len() {
            return Err(header_err(format!("payload has {} bytes, manifest covers {expect}", payload.len())));
        }
        Ok(ModelFile { flavor, meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn shape_str(s: Shape) -> String {
    match s {
        Shape::Image { h, w, c } => format!("image {h} {w} {c}"),
        Shape::Vector(n) => format!("vector {n}"),
    }
}

fn parse_shape(s: &str) -> Result<Shape> {
    let f: Vec<&str> = s.split(' ').collect();
    let n = |i: usize| f.get(i).and_then(|v| v.parse::<usize>().ok()).ok_or_else(|| header_err(format!("bad shape {s:?}")));
    match f.first() {
        Some(&"image") if f.len() == 4 => Ok(Shape::Image { h: n(1)?, w: n(2)?, c: n(3)? }),
        Some(&"vector") if f.len() == 2 => Ok(Shape::Vector(n(1)?)),
        _ => Err(header_err(format!("bad shape {s:?}"))),
    }
}

fn parse_act(s: &str) -> Result<Activation> {
    Activation::from_name(s).ok_or_else(|| header_err(format!("unknown activation {s:?}")))
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    s.parse().map_err(|_| header_err(format!("bad number for {key}: {s:?}")))
}

/// φ-form file of a parameterized network.
pub fn phi_file(net: &LipNetwork) -> ModelFile {
    let mut f = ModelFile::new(Flavor::Phi);
    f.set("arch", render(&net.arch));
    f.set("input", shape_str(net.input));
    f.set("act", net.act.name());
    f.set("eps", net.eps);
    match net.rho() {
        Some(rho) => f.set("rho", rho),
        None => {
            f.set("metric", "factors");
            f.set("l0.diagonal", net.l0.diagonal);
        }
    }
    if net.rho().is_none() {
        f.tensors.push(("metric.l0".into(), net.l0.l.clone()));
        if let Some(lq) = &net.lq {
            f.tensors.push(("metric.lq".into(), lq.clone()));
        }
    }
    for (name, m) in net.named_tensors() {
        f.tensors.push((name, m.clone()));
    }
    f
}

/// Rebuilds the parameterized network stored by [`phi_file`].
pub fn network_from_phi(f: &ModelFile) -> Result<LipNetwork> {
    if f.flavor != Flavor::Phi {
        return Err(header_err("expected a phi-form model"));
    }
    let arch = parse_arch(f.need("arch")?)?;
    let input = parse_shape(f.need("input")?)?;
    let act = parse_act(f.need("act")?)?;
    let eps = parse_f64("eps", f.need("eps")?)?;
    let mut net = match f.get("rho") {
        Some(r) => LipNetwork::new(arch, input, act, parse_f64("rho", r)?, eps, 0)?,
        None => {
            let mut l0 = GainFactor::new(f.need_tensor("metric.l0")?.clone());
            l0.diagonal = f.get("l0.diagonal") == Some("true");
            LipNetwork::with_metrics(arch, input, act, l0, f.tensor("metric.lq").cloned(), eps, 0)?
        }
    };
    let names: Vec<String> = net.named_tensors().into_iter().map(|(n, _)| n).collect();
    for (name, slot) in names.iter().zip(net.tensors_mut()) {
        let m = f.need_tensor(name)?;
        if m.shape() != slot.shape() {
            return Err(header_err(format!("tensor {name} is {:?}, the architecture needs {:?}", m.shape(), slot.shape())));
        }
        *slot = m.clone();
    }
    Ok(net)
}

/// Kernel-form file of a standard-form network, certificate included.
pub fn kernel_file(net: &PlainNetwork) -> ModelFile {
    let mut f = ModelFile::new(Flavor::Kernel);
    f.set("input", shape_str(net.input));
    if let Some(rho) = net.rho {
        f.set("rho", rho);
    }
    f.set("layers", net.layers.len());
    for (k, l) in net.layers.iter().enumerate() {
        let key = format!("layer.{k}");
        match l {
            PlainLayer::Conv { kernel, bias, padding } => {
                let pad = match padding {
                    Padding::Causal => "causal".to_string(),
                    Padding::Same => "same".to_string(),
                    Padding::Offset(a, b) => format!("offset {a} {b}"),
                };
                let (s1, s2) = kernel.stride;
                f.set(&key, format!("conv {} {} {} {} {s1} {s2} {pad}", kernel.c_out, kernel.c_in, kernel.r1, kernel.r2));
                let taps: Vec<&Mat> = kernel.taps.iter().collect();
                f.tensors.push((format!("{key}.kernel"), Mat::vstack(&taps).expect("equal tap widths")));
                f.tensors.push((format!("{key}.bias"), Mat::row(bias)));
            }
            PlainLayer::Fc { w, bias } => {
                f.set(&key, "fc");
                f.tensors.push((format!("{key}.w"), w.clone()));
                f.tensors.push((format!("{key}.bias"), Mat::row(bias)));
            }
            PlainLayer::Act(a) => f.set(&key, format!("act {}", a.name())),
            PlainLayer::Pool { kind, window, stride } => {
                let kind = match kind {
                    PoolKind::Average => "av",
                    PoolKind::Max => "max",
                };
                f.set(&key, format!("pool {kind} {} {} {} {}", window.0, window.1, stride.0, stride.1));
            }
            PlainLayer::Flatten => f.set(&key, "flatten"),
        }
    }
    if let Some(c) = &net.certificate {
        for line in c.render_kv().lines() {
            if let Some((k, v)) = line.split_once('=') {
                f.set(&format!("cert.{k}"), v);
            }
        }
    }
    f
}

/// Rebuilds the network stored by [`kernel_file`].
pub fn network_from_kernel(f: &ModelFile) -> Result<PlainNetwork> {
    if f.flavor != Flavor::Kernel {
        return Err(header_err("expected a kernel-form model"));
    }
    let input = parse_shape(f.need("input")?)?;
    let n: usize = f.need("layers")?.parse().map_err(|_| header_err("bad layer count"))?;
    let mut layers = Vec::with_capacity(n);
    for k in 0..n {
        let key = format!("layer.{k}");
        let spec = f.need(&key)?;
        let w: Vec<&str> = spec.split(' ').collect();
        let num = |i: usize| -> Result<usize> { w.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| header_err(format!("bad layer {spec:?}"))) };
        let bias = || -> Result<Vec<f64>> { Ok(f.need_tensor(&format!("{key}.bias"))?.data().to_vec()) };
        let layer = match w[0] {
            "conv" => {
                let (c_out, c_in, r1, r2, s1, s2) = (num(1)?, num(2)?, num(3)?, num(4)?, num(5)?, num(6)?);
                let padding = match w.get(7) {
                    Some(&"causal") => Padding::Causal,
                    Some(&"same") => Padding::Same,
                    Some(&"offset") => {
                        let o = |i: usize| -> Result<isize> { w.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| header_err(format!("bad layer {spec:?}"))) };
                        Padding::Offset(o(8)?, o(9)?)
                    }
                    _ => return Err(header_err(format!("bad padding in {spec:?}"))),
                };
                let stack = f.need_tensor(&format!("{key}.kernel"))?;
                let ntaps = (r1 + 1) * (r2 + 1);
                if stack.shape() != (ntaps * c_out, c_in) {
                    return Err(header_err(format!("{key}.kernel has shape {:?}", stack.shape())));
                }
                let taps = (0..ntaps).map(|t| stack.block(t * c_out, 0, c_out, c_in)).collect();
                let kernel = Kernel2D { c_out, c_in, r1, r2, taps, stride: (s1, s2) };
                PlainLayer::Conv { kernel, bias: bias()?, padding }
            }
            "fc" => PlainLayer::Fc { w: f.need_tensor(&format!("{key}.w"))?.clone(), bias: bias()? },
            "act" => PlainLayer::Act(parse_act(w.get(1).copied().unwrap_or(""))?),
            "pool" => {
                let kind = match w.get(1) {
                    Some(&"av") => PoolKind::Average,
                    Some(&"max") => PoolKind::Max,
                    _ => return Err(header_err(format!("bad pool kind in {spec:?}"))),
                };
                PlainLayer::Pool { kind, window: (num(2)?, num(3)?), stride: (num(4)?, num(5)?) }
            }
            "flatten" => PlainLayer::Flatten,
            _ => return Err(header_err(format!("unknown layer {spec:?}"))),
        };
        layers.push(layer);
    }
    let mut net = PlainNetwork::new(input, layers)?;
    net.rho = match f.get("rho") {
        Some(r) => Some(parse_f64("rho", r)?),
        None => None,
    };
    let kv: String = f
        .meta
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("cert.").map(|k| format!("{k}={v}\n")))
        .collect();
    if !kv.is_empty() {
        net.certificate = Some(Certificate::parse_kv(&kv).ok_or_else(|| header_err("unreadable certificate"))?);
    }
    Ok(net)
}
