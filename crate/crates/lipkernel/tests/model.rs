use lipkernel::core::arch::parse_arch;
use lipkernel::core::layers::GainFactor;
use lipkernel::core::linalg::Mat;
use lipkernel::core::nn::{Activation, LipNetwork, Shape};
use lipkernel::model::{kernel_file, network_from_kernel, network_from_phi, phi_file, Flavor, ModelFile, VERSION};
use lipkernel::Error;

fn image(h: usize, w: usize, c: usize) -> Shape {
    Shape::Image { h, w, c }
}

fn probe(n: usize, cols: usize) -> Mat {
    Mat::from_fn(n, cols, |i, j| ((i * 31 + j * 7) % 13) as f64 / 13.0)
}

fn nets() -> Vec<LipNetwork> {
    vec![
        LipNetwork::new(parse_arch("c(3,3,2).p(max,2,2).f(4).f(3)").unwrap(), image(8, 8, 1), Activation::Relu, 2.0, 1e-3, 1).unwrap(),
        LipNetwork::new(parse_arch("c(2,3,1).p(av,2,2).f(3)").unwrap(), image(4, 4, 2), Activation::Tanh, 1.0, 1e-3, 2).unwrap(),
        LipNetwork::new(parse_arch("f(5).f(2)").unwrap(), Shape::Vector(3), Activation::Tanh, 4.0, 1e-3, 3).unwrap(),
    ]
}

#[test]
fn phi_round_trip_is_bitwise() {
    for net in nets() {
        let f = phi_file(&net);
        let bytes = f.to_bytes().unwrap();
        let back = ModelFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let net2 = network_from_phi(&back).unwrap();
        let x = probe(3, net.input.len());
        let (a, b) = (net.forward(&x).unwrap(), net2.forward(&x).unwrap());
        assert_eq!(a.data(), b.data());
    }
}

#[test]
fn kernel_round_trip_is_bitwise() {
    for net in nets() {
        let plain = net.export().unwrap();
        let f = kernel_file(&plain);
        assert_eq!(f.flavor, Flavor::Kernel);
        let bytes = f.to_bytes().unwrap();
        let back = network_from_kernel(&ModelFile::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(kernel_file(&back).to_bytes().unwrap(), bytes);
        assert_eq!(back.certificate, plain.certificate);
        let x = probe(4, net.input.len());
        assert_eq!(plain.forward(&x).unwrap().data(), back.forward(&x).unwrap().data());
    }
}

#[test]
fn metric_form_round_trip() {
    let l0 = GainFactor::new(Mat::from_rows(&[[1.5, 0.2], [0.0, 1.1]]));
    let lq = Mat::from_rows(&[[0.5, 0.0], [0.1, 0.7]]);
    let net = LipNetwork::with_metrics(parse_arch("c(2,3,1).f(2)").unwrap(), image(4, 4, 2), Activation::Relu, l0, Some(lq), 1e-3, 5).unwrap();
    let f = phi_file(&net);
    assert!(f.get("rho").is_none());
    let back = network_from_phi(&ModelFile::from_bytes(&f.to_bytes().unwrap()).unwrap()).unwrap();
    assert_eq!(phi_file(&back), f);
    assert!(back.certify(1e-8).unwrap().certified);
}

#[test]
fn save_load_through_disk() {
    let dir = std::env::temp_dir().join(format!("lpkn-model-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join("m.lpkn");
    let f = phi_file(&nets()[0]);
    f.save(&p).unwrap();
    assert_eq!(ModelFile::load(&p).unwrap(), f);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn corruption_is_detected() {
    let bytes = phi_file(&nets()[1]).to_bytes().unwrap();

    let mut flipped = bytes.clone();
    let last_payload = flipped.len() - 5;
    flipped[last_payload] ^= 0x01;
    assert!(matches!(ModelFile::from_bytes(&flipped), Err(Error::ChecksumMismatch { .. })));

    let mut newer = bytes.clone();
    newer[4..8].copy_from_slice(&(VERSION + 1).to_le_bytes());
    assert!(matches!(
        ModelFile::from_bytes(&newer),
        Err(Error::VersionMismatch { found, expected }) if found == VERSION + 1 && expected == VERSION
    ));

    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(ModelFile::from_bytes(&magic), Err(Error::BadMagic(m)) if &m == b"XPKN"));

    assert!(ModelFile::from_bytes(&bytes[..10]).is_err());
    assert!(ModelFile::from_bytes(&[]).is_err());
}

#[test]
fn header_rejects_unusable_entries() {
    let mut f = ModelFile::new(Flavor::Phi);
    f.set("a=b", 1);
    assert!(matches!(f.to_bytes(), Err(Error::Header(_))));
    let mut f = ModelFile::new(Flavor::Kernel);
    f.tensors.push(("two words".into(), Mat::zeros(1, 1)));
    assert!(matches!(f.to_bytes(), Err(Error::Header(_))));
}

#[test]
fn empty_file_round_trips() {
    let f = ModelFile::new(Flavor::Kernel);
    assert_eq!(ModelFile::from_bytes(&f.to_bytes().unwrap()).unwrap(), f);
}
