use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lipkernel::idx::{write_idx_images, write_idx_labels};
use lipkernel::model::{Flavor, ModelFile};

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Self {
        let p = std::env::temp_dir().join(format!("lpkn-cli-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&p);
        std::fs::create_dir_all(&p).unwrap();
        TempDir(p)
    }
    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn lipkernel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lipkernel")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = lipkernel(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

/// Tiny digit-like data: class k lights up a k-dependent block.
fn write_toy_mnist(dir: &Path) {
    let make = |n: usize, offset: usize| {
        let mut px = vec![0u8; n * 784];
        let mut labels = Vec::new();
        for i in 0..n {
            let k = (i + offset) % 10;
            labels.push(k as u8);
            for r in 0..8 {
                for c in 0..8 {
                    px[i * 784 + (2 * k + r) * 28 + 4 + c + k] = 200 + (i % 50) as u8;
                }
            }
        }
        (px, labels)
    };
    let (px, lab) = make(60, 0);
    write_idx_images(&dir.join("train-images-idx3-ubyte.gz"), 28, 28, &px).unwrap();
    write_idx_labels(&dir.join("train-labels-idx1-ubyte.gz"), &lab).unwrap();
    let (px, lab) = make(20, 3);
    write_idx_images(&dir.join("t10k-images-idx3-ubyte.gz"), 28, 28, &px).unwrap();
    write_idx_labels(&dir.join("t10k-labels-idx1-ubyte.gz"), &lab).unwrap();
}

#[test]
fn train_certify_export_eval_attack() {
    let d = TempDir::new("flow");
    write_toy_mnist(&d.0);
    let data = d.0.to_str().unwrap();
    let model = d.path("m.lpkn");
    let m = model.to_str().unwrap();
    let arch = "c(2,4,2).c(4,4,2).f(10)";
    let train = ["train", "--arch", arch, "--rho", "2", "--epochs", "2", "--batch", "16", "--seed", "3", "--data-dir", data, "--out", m];
    let log = ok(&train);
    assert!(log.contains("epoch   2 test"));
    let csv = std::fs::read_to_string(d.path("m.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("epoch,split,loss,accuracy"));
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(ModelFile::load(&model).unwrap().flavor, Flavor::Phi);

    let first = (std::fs::read(&model).unwrap(), csv);
    ok(&train);
    assert_eq!(std::fs::read(&model).unwrap(), first.0, "same flags and seed must give the same model");
    assert_eq!(std::fs::read_to_string(d.path("m.csv")).unwrap(), first.1);

    let cert = ok(&["certify", "--model", m]);
    assert!(cert.contains("verdict: CERTIFIED"), "{cert}");
    assert!(cert.contains("certified=true"));

    let kernel = d.path("k.lpkn");
    let k = kernel.to_str().unwrap();
    ok(&["export", "--model", m, "--out", k]);
    assert_eq!(ModelFile::load(&kernel).unwrap().flavor, Flavor::Kernel);
    let report = std::fs::read_to_string(d.path("k.cert.txt")).unwrap();
    assert!(report.contains("Lipschitz bound: 2"));
    assert!(ok(&["certify", "--model", k]).contains("verdict: CERTIFIED"));

    let e_phi = ok(&["eval", "--model", m, "--data-dir", data]);
    let e_kernel = ok(&["eval", "--model", k, "--data-dir", data]);
    assert_eq!(e_phi, e_kernel);
    assert!(e_kernel.contains("samples  20"));

    let atk = ok(&["attack", "--model", k, "--data-dir", data, "--eps", "0.1,0.5", "--steps", "3"]);
    assert_eq!(atk.lines().count(), 3);
    for line in atk.lines().skip(1) {
        let v: Vec<f64> = line.split_whitespace().map(|s| s.parse().unwrap()).collect();
        assert!(v[2] <= v[1] && v[3] <= v[2], "certified <= pgd <= clean violated: {line}");
    }
}

#[test]
fn metric_factor_files_are_accepted() {
    let d = TempDir::new("metric");
    write_toy_mnist(&d.0);
    let mut q = ModelFile::new(Flavor::Kernel);
    let lq = lipkernel::core::linalg::Mat::from_fn(10, 10, |i, j| if i == j { 0.5 } else { 0.0 });
    q.tensors.push(("lq".into(), lq));
    let qp = d.path("q.lpkn");
    q.save(&qp).unwrap();
    let m = d.path("m.lpkn");
    ok(&["train", "--arch", "c(2,4,2).f(10)", "--q-file", qp.to_str().unwrap(), "--epochs", "1", "--data-dir", d.0.to_str().unwrap(), "--out", m.to_str().unwrap()]);
    let f = ModelFile::load(&m).unwrap();
    assert!(f.get("rho").is_none());
    assert!(ok(&["certify", "--model", m.to_str().unwrap()]).contains("CERTIFIED"));
}

#[test]
fn bench_both_gives_two_rows_per_point() {
    let d = TempDir::new("bench");
    let out = d.path("b.csv");
    ok(&["bench", "--engine", "both", "--channels", "2,4", "--image", "8", "--reps", "1", "--warmup", "0", "--out", out.to_str().unwrap()]);
    let csv = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "engine,channels,image,kernel,avg_ms,std_ms,reps");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("kernel-domain,2,8,3,") && rows[2].starts_with("fourier-domain,2,8,3,"));
}

#[test]
fn fit_cosine_writes_predictions() {
    let d = TempDir::new("cos");
    let out = d.path("c.csv");
    let args = ["fit-cosine", "--epochs", "5", "--samples", "40", "--grid", "11", "--out", out.to_str().unwrap()];
    let log = ok(&args);
    assert!(log.contains("lipkernel mse") && log.contains("spectral  mse"));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 12);
    assert_eq!(csv.lines().next(), Some("x,cos,lipkernel,spectral"));
    ok(&args);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), csv);
}

#[test]
fn errors_exit_with_code_one() {
    let d = TempDir::new("err");
    let missing = d.path("none.lpkn");
    for args in [
        vec!["certify", "--model", missing.to_str().unwrap()],
        vec!["train", "--arch", "c(16,", "--data-dir", d.0.to_str().unwrap()],
        vec!["bench", "--reps", "0"],
        vec!["bench", "--engine", "gpu"],
        vec!["frobnicate"],
    ] {
        let o = lipkernel(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}
