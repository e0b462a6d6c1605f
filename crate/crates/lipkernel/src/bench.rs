//! Wall-clock inference timing: kernel-domain convolution against the
//! Fourier-domain orthogonal layer.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lipkernel_core::linalg::Mat;
use lipkernel_core::nn::{fourier_orth_forward, FourierOrthLayer, PlainLayer, PlainNetwork, Shape};
use lipkernel_core::statespace::{Image, Kernel2D, Padding};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    KernelDomain,
    FourierDomain,
}

impl Engine {
    pub fn name(&self) -> &'static str {
        match self {
            Engine::KernelDomain => "kernel-domain",
            Engine::FourierDomain => "fourier-domain",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "kernel-domain" | "kernel" => Some(Engine::KernelDomain),
            "fourier-domain" | "fourier" => Some(Engine::FourierDomain),
            _ => None,
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One sweep point: a `channels → channels` layer on an `image × image` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchSpec {
    pub channels: usize,
    pub image: usize,
    pub kernel: usize,
    pub engine: Engine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchResult {
    pub spec: BenchSpec,
    pub avg_ms: f64,
    pub std_ms: f64,
    pub reps: usize,
}

pub const CSV_HEADER: &str = "engine,channels,image,kernel,avg_ms,std_ms,reps";

impl BenchResult {
    pub fn csv_row(&self) -> String {
        let s = self.spec;
        format!("{},{},{},{},{:.6},{:.6},{}", s.engine, s.channels, s.image, s.kernel, self.avg_ms, self.std_ms, self.reps)
    }
}

/// `os/arch, N threads` of the machine running the benchmark.
pub fn machine_info() -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{}/{}, {threads} threads", std::env::consts::OS, std::env::consts::ARCH)
}

fn time<F: FnMut() -> Result<()>>(mut f: F, reps: usize, warmup: usize) -> Result<(f64, f64)> {
    for _ in 0..warmup {
        f()?;
    }
    let mut ms = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        f()?;
        ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let avg = ms.iter().sum::<f64>() / reps as f64;
    let var = ms.iter().map(|m| (m - avg) * (m - avg)).sum::<f64>() / reps as f64;
    Ok((avg, var.sqrt()))
}

/// Times `reps` single-image forwards after `warmup` untimed ones.
///
/// The kernel-domain engine runs a `kernel × kernel` convolution with
/// centred zero padding through the im2col path. The Fourier engine
/// recomputes its per-frequency Cayley transforms on every call, as a
/// Fourier-parameterized layer does at inference.
pub fn bench_inference(spec: BenchSpec, reps: usize, warmup: usize) -> Result<BenchResult> {
    if reps == 0 {
        return Err(Error::InvalidSpec("reps must be at least 1".into()));
    }
    if spec.channels == 0 || spec.image == 0 || spec.kernel == 0 {
        return Err(Error::InvalidSpec(format!("empty benchmark {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (c, n) = (spec.channels, spec.image);
    let pixels: Vec<f64> = (0..n * n * c).map(|_| rng.random::<f64>()).collect();
    let (avg_ms, std_ms) = match spec.engine {
        Engine::KernelDomain => {
            let r = spec.kernel - 1;
            let kernel = Kernel2D::from_fn(c, c, r, r, |_, _, _, _| rng.random::<f64>() - 0.5);
            let layer = PlainLayer::Conv { kernel, bias: vec![0.0; c], padding: Padding::Same };
            let net = PlainNetwork::new(Shape::Image { h: n, w: n, c }, vec![layer])?;
            let x = Mat::from_vec(1, n * n * c, pixels);
            time(|| net.forward(&x).map(drop).map_err(Error::from), reps, warmup)?
        }
        Engine::FourierDomain => {
            let layer = FourierOrthLayer::random(c, c, n, 0.1, &mut rng)?;
            let x = Image::from_vec(n, n, c, pixels);
            time(|| fourier_orth_forward(&layer, &x).map(drop).map_err(Error::from), reps, warmup)?
        }
    };
    Ok(BenchResult { spec, avg_ms, std_ms, reps })
}
