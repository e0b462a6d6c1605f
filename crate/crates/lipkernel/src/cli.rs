//! Command-line front end. [`run`] takes parsed arguments and writes all
//! results to the given writer, so commands can be driven from tests.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use lipkernel_core::arch::parse_arch;
use lipkernel_core::cert::{certified_accuracy, empirical_lipschitz, margins, DEFAULT_TOL};
use lipkernel_core::data::{cosine_dataset, cosine_grid, Dataset};
use lipkernel_core::layers::GainFactor;
use lipkernel_core::linalg::Mat;
use lipkernel_core::nn::{Activation, PlainNetwork};
use lipkernel_core::train::{
    accuracy, evaluate, pgd_attack, spectral_baseline_train, train, LossKind, PgdConfig, TrainConfig,
};

use crate::bench::{bench_inference, machine_info, BenchSpec, Engine, CSV_HEADER};
use crate::error::{Error, Result};
use crate::idx::load_mnist_dir;
use crate::model::{kernel_file, network_from_kernel, network_from_phi, phi_file, Flavor, ModelFile};

#[derive(Debug, Parser)]
#[command(name = "lipkernel", version, about = "Lipschitz-bounded CNNs: train, certify, export, attack, benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a parameterized network on MNIST and write its free variables.
    Train(TrainArgs),
    /// Print per-layer LMI eigenvalues and the verdict for a model file.
    Certify(CertifyArgs),
    /// Time kernel-domain against Fourier-domain inference.
    Bench(BenchArgs),
    /// Turn a trained model into a kernel-form model plus certificate report.
    Export(ExportArgs),
    /// Evaluate clean and certified accuracy.
    Eval(EvalArgs),
    /// Run the ℓ2 PGD attack over a list of radii.
    Attack(AttackArgs),
    /// Fit cos(x) on [−π/2, π/2] with both trainers and write predictions.
    FitCosine(FitCosineArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ActArg {
    Relu,
    Tanh,
}

impl From<ActArg> for Activation {
    fn from(a: ActArg) -> Self {
        match a {
            ActArg::Relu => Activation::Relu,
            ActArg::Tanh => Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EngineArg {
    Kernel,
    Fourier,
    Both,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory holding the four MNIST IDX files (optionally .gz).
    #[arg(long, default_value = "data/mnist")]
    pub data_dir: PathBuf,
    /// Use only the first N test samples.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value = "c(16,4,2).c(32,4,2).f(100).f(10)")]
    pub arch: String,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    /// Model file whose first tensor is the output factor L_Q.
    #[arg(long)]
    pub q_file: Option<PathBuf>,
    /// Model file whose first tensor is the input factor L₀.
    #[arg(long)]
    pub r_file: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Gramian and diagonal-dominance ε.
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    #[arg(long, value_enum, default_value = "relu")]
    pub act: ActArg,
    #[arg(long, default_value = "data/mnist")]
    pub data_dir: PathBuf,
    /// Use only the first N training samples.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value = "model.lpkn")]
    pub out: PathBuf,
    /// Metrics CSV; defaults to the model path with a .csv extension.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Certificate report; defaults to the output path with a .cert.txt extension.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Radii for certified accuracy.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.5, 1.0, 1.58])]
    pub eps: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0, 1.58])]
    pub eps: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value = "both")]
    pub engine: EngineArg,
    #[arg(long, value_delimiter = ',', default_values_t = vec![32])]
    pub channels: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![32])]
    pub image: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub kernel: usize,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 2)]
    pub warmup: usize,
    /// CSV output; rows are also printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitCosineArgs {
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Number of grid points in the prediction CSV.
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    #[arg(long, default_value = "cosine.csv")]
    pub out: PathBuf,
}

fn with_ext(p: &Path, ext: &str) -> PathBuf {
    p.with_extension(ext)
}

fn first_tensor(path: &Path) -> Result<Mat> {
    let f = ModelFile::load(path)?;
    f.tensors.into_iter().next().map(|(_, m)| m).ok_or_else(|| Error::InvalidSpec(format!("{} holds no tensors", path.display())))
}

/// Either flavor of model file as a standard-form network.
fn load_plain(path: &Path) -> Result<PlainNetwork> {
    let f = ModelFile::load(path)?;
    match f.flavor {
        Flavor::Kernel => network_from_kernel(&f),
        Flavor::Phi => Ok(network_from_phi(&f)?.export()?),
    }
}

fn test_split(d: &DataArgs) -> Result<Dataset> {
    let (_, test) = load_mnist_dir(&d.data_dir)?;
    Ok(match d.limit {
        Some(n) => test.take(n),
        None => test,
    })
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a, out),
        Command::Certify(a) => cmd_certify(a, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Export(a) => cmd_export(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Attack(a) => cmd_attack(a, out),
        Command::FitCosine(a) => cmd_fit_cosine(a, out),
    }
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = TrainConfig::new(parse_arch(&a.arch)?, a.rho, LossKind::CrossEntropy);
    cfg.epochs = a.epochs;
    cfg.batch = a.batch;
    cfg.seed = a.seed;
    cfg.optimizer.lr = a.lr;
    cfg.eps_gramian = a.eps;
    cfg.act = a.act.into();
    if let Some(p) = &a.r_file {
        cfg.l0 = Some(GainFactor::new(first_tensor(p)?));
    }
    if let Some(p) = &a.q_file {
        cfg.lq = Some(first_tensor(p)?);
    }
    let (train_ds, test_ds) = load_mnist_dir(&a.data_dir)?;
    let train_ds = match a.limit {
        Some(n) => train_ds.take(n),
        None => train_ds,
    };
    let (net, log) = train(&cfg, &train_ds, Some(&test_ds))?;
    phi_file(&net).save(&a.out)?;
    let metrics = a.metrics.unwrap_or_else(|| with_ext(&a.out, "csv"));
    std::fs::write(&metrics, log.to_csv())?;
    for r in &log.rows {
        writeln!(out, "epoch {:>3} {:<5} loss {:.6} accuracy {:.4}", r.epoch, r.split, r.loss, r.accuracy.unwrap_or(f64::NAN))?;
    }
    writeln!(out, "wrote {} and {}", a.out.display(), metrics.display())?;
    Ok(())
}

fn cmd_certify(a: CertifyArgs, out: &mut dyn Write) -> Result<()> {
    let f = ModelFile::load(&a.model)?;
    let cert = match f.flavor {
        Flavor::Phi => network_from_phi(&f)?.certify(a.tol)?,
        Flavor::Kernel => network_from_kernel(&f)?
            .certificate
            .ok_or_else(|| Error::InvalidSpec("kernel-form model carries no certificate".into()))?,
    };
    write!(out, "{}", cert.render_text())?;
    writeln!(out)?;
    write!(out, "{}", cert.render_kv())?;
    Ok(())
}

fn cmd_export(a: ExportArgs, out: &mut dyn Write) -> Result<()> {
    let f = ModelFile::load(&a.model)?;
    if f.flavor != Flavor::Phi {
        return Err(Error::InvalidSpec(format!("{} is already kernel-form", a.model.display())));
    }
    let plain = network_from_phi(&f)?.export()?;
    kernel_file(&plain).save(&a.out)?;
    let cert = plain.certificate.as_ref().expect("export attaches a certificate");
    let report = a.report.unwrap_or_else(|| with_ext(&a.out, "cert.txt"));
    std::fs::write(&report, format!("{}\n{}", cert.render_text(), cert.render_kv()))?;
    write!(out, "{}", cert.render_text())?;
    writeln!(out, "wrote {} and {}", a.out.display(), report.display())?;
    Ok(())
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let net = load_plain(&a.model)?;
    let ds = test_split(&a.data)?;
    let labels = ds.labels().ok_or_else(|| Error::InvalidSpec("evaluation needs labelled data".into()))?;
    let logits = net.forward_batched(&ds.inputs, 256)?;
    let (loss, acc) = evaluate(&net, &ds, LossKind::CrossEntropy)?;
    writeln!(out, "samples  {}", ds.len())?;
    writeln!(out, "loss     {loss:.6}")?;
    writeln!(out, "accuracy {:.4}", acc.unwrap_or(f64::NAN))?;
    let ms = margins(&logits, labels);
    match net.rho {
        Some(rho) => {
            writeln!(out, "{:>8} {:>10}", "eps", "certified")?;
            for e in &a.eps {
                writeln!(out, "{e:>8.3} {:>10.4}", certified_accuracy(&ms, rho, *e))?;
            }
        }
        None => writeln!(out, "certified accuracy needs a scalar Lipschitz bound")?,
    }
    Ok(())
}

fn cmd_attack(a: AttackArgs, out: &mut dyn Write) -> Result<()> {
    let net = load_plain(&a.model)?;
    let ds = test_split(&a.data)?;
    let labels = ds.labels().ok_or_else(|| Error::InvalidSpec("attack needs labelled data".into()))?;
    let logits = net.forward_batched(&ds.inputs, 256)?;
    let clean = accuracy(&logits, labels);
    let ms = margins(&logits, labels);
    writeln!(out, "{:>8} {:>8} {:>8} {:>10}", "eps", "clean", "pgd", "certified")?;
    for &e in &a.eps {
        let mut cfg = PgdConfig::new(e);
        cfg.steps = a.steps;
        cfg.step_size = 2.5 * e / a.steps.max(1) as f64;
        let mut hits = 0.0;
        for start in (0..ds.len()).step_by(256) {
            let n = 256.min(ds.len() - start);
            let x = ds.inputs.block(start, 0, n, ds.inputs.cols());
            let xa = pgd_attack(&net, &x, &labels[start..start + n], cfg)?;
            hits += accuracy(&net.forward(&xa)?, &labels[start..start + n]) * n as f64;
        }
        let cert = net.rho.map_or(f64::NAN, |r| certified_accuracy(&ms, r, e));
        writeln!(out, "{e:>8.3} {clean:>8.4} {:>8.4} {cert:>10.4}", hits / ds.len().max(1) as f64)?;
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs, out: &mut dyn Write) -> Result<()> {
    let engines: &[Engine] = match a.engine {
        EngineArg::Kernel => &[Engine::KernelDomain],
        EngineArg::Fourier => &[Engine::FourierDomain],
        EngineArg::Both => &[Engine::KernelDomain, Engine::FourierDomain],
    };
    let mut csv = format!("{CSV_HEADER}\n");
    writeln!(out, "# {}", machine_info())?;
    writeln!(out, "{CSV_HEADER}")?;
    for &c in &a.channels {
        for &n in &a.image {
            for &engine in engines {
                let r = bench_inference(BenchSpec { channels: c, image: n, kernel: a.kernel, engine }, a.reps, a.warmup)?;
                writeln!(out, "{}", r.csv_row())?;
                csv.push_str(&r.csv_row());
                csv.push('\n');
            }
        }
    }
    if let Some(p) = &a.out {
        std::fs::write(p, csv)?;
    }
    Ok(())
}

fn cmd_fit_cosine(a: FitCosineArgs, out: &mut dyn Write) -> Result<()> {
    let ds = cosine_dataset(a.samples, a.seed)?;
    let mut cfg = TrainConfig::new(parse_arch("f(2).f(1)")?, a.rho, LossKind::Mse);
    cfg.act = Activation::Tanh;
    cfg.epochs = a.epochs;
    cfg.batch = a.batch;
    cfg.seed = a.seed;
    cfg.optimizer.lr = a.lr;
    let (lip, lip_log) = train(&cfg, &ds, None)?;
    let (spec, spec_log) = spectral_baseline_train(&cfg, &ds)?;
    let lip = lip.export()?;
    let grid = cosine_grid(a.grid);
    let (yl, ys) = (lip.forward(&grid)?, spec.forward(&grid)?);
    let mut csv = String::from("x,cos,lipkernel,spectral\n");
    for i in 0..grid.rows() {
        let x = grid[(i, 0)];
        csv.push_str(&format!("{x},{},{},{}\n", x.cos(), yl[(i, 0)], ys[(i, 0)]));
    }
    std::fs::write(&a.out, csv)?;
    let mse = |l: &lipkernel_core::train::MetricsLog| l.last("train").map_or(f64::NAN, |r| r.loss);
    writeln!(out, "lipkernel mse {:.6e}", mse(&lip_log))?;
    writeln!(out, "spectral  mse {:.6e}", mse(&spec_log))?;
    writeln!(out, "empirical Lipschitz: lipkernel {:.4}, spectral {:.4}", empirical_lipschitz(&lip, 4, 20, 0)?, empirical_lipschitz(&spec, 4, 20, 0)?)?;
    writeln!(out, "wrote {}", a.out.display())?;
    Ok(())
}
