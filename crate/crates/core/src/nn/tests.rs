use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::arch::parse_arch;
use crate::autodiff::PoolKind;
use crate::layers::Weights;
use crate::linalg::testutil::{random_mat, Lcg};
use crate::linalg::Mat;
use crate::statespace::{kernel_from_realization_2d, ss_forward_2d, Image, Kernel2D, Padding};

fn randomize(net: &mut LipNetwork, seed: u64, scale: f64) {
    let mut rng = Lcg::new(seed);
    for m in net.tensors_mut() {
        for x in m.data_mut() {
            *x += scale * rng.normal();
        }
    }
}

#[test]
fn identity_conv_passes_through() {
    let k = Kernel2D::from_fn(2, 2, 0, 0, |_, _, o, i| if o == i { 1.0 } else { 0.0 });
    let net = PlainNetwork::new(
        Shape::Image { h: 3, w: 4, c: 2 },
        vec![PlainLayer::Conv { kernel: k, bias: vec![0.0; 2], padding: Padding::Causal }],
    )
    .unwrap();
    let x = random_mat(5, 24, 1);
    assert_eq!(net.forward(&x).unwrap(), x);
}

#[test]
fn hand_built_cosine_net() {
    let net = PlainNetwork::new(
        Shape::Vector(1),
        vec![
            PlainLayer::Fc { w: Mat::column(&[-1.0, -1.0]), bias: vec![-1.0, 1.0] },
            PlainLayer::Act(Activation::Tanh),
            PlainLayer::Fc { w: Mat::row(&[-1.0, 1.0]), bias: vec![-0.5] },
        ],
    )
    .unwrap();
    let y = net.forward(&Mat::zeros(1, 1)).unwrap();
    let want = 2.0 * 1.0f64.tanh() - 0.5;
    assert!((y[(0, 0)] - want).abs() < 1e-15);
    assert!((y[(0, 0)] - 1.02319).abs() < 1e-4);
    // y(x) = −tanh(−x−1) + tanh(−x+1) − 0.5 elsewhere too
    let xs = Mat::column(&[-1.2, 0.3, 1.5]);
    let ys = net.forward(&xs).unwrap();
    for i in 0..3 {
        let x: f64 = xs[(i, 0)];
        assert!((ys[(i, 0)] - (-(-x - 1.0).tanh() + (1.0 - x).tanh() - 0.5)).abs() < 1e-15);
    }
}

#[test]
fn shape_chain_is_validated() {
    let err = PlainNetwork::new(Shape::Vector(3), vec![PlainLayer::Fc { w: Mat::zeros(2, 4), bias: vec![0.0; 2] }]);
    assert!(err.is_err());
    let err = PlainNetwork::new(Shape::Vector(3), vec![PlainLayer::Flatten]);
    assert!(err.is_err());
}

#[test]
fn planned_geometry_of_2c2f() {
    let arch = parse_arch("c(16,4,2).c(32,4,2).f(100).f(10)").unwrap();
    let plan = plan_layers(&arch, Shape::Image { h: 32, w: 32, c: 1 }).unwrap();
    assert_eq!(plan[0], LayerPlan::Conv { h: 32, w: 32, c_in: 1, c: 16, stride: 2, r: 1, offset: 1, pool: None });
    assert_eq!(plan[2], LayerPlan::Fc { c_in: 8 * 8 * 32, rep: 64, c: 100, last: false });
    assert!(matches!(plan[3], LayerPlan::Fc { last: true, .. }));
    assert!(plan_layers(&arch, Shape::Image { h: 30, w: 30, c: 1 }).is_err());
    let arch = parse_arch("c(4,3,1).p(av,2,2).f(3)").unwrap();
    let plan = plan_layers(&arch, Shape::Image { h: 8, w: 8, c: 2 }).unwrap();
    let LayerPlan::Conv { pool: Some(p), .. } = plan[0] else { panic!() };
    assert!((p.rho - 0.5).abs() < 1e-12);
}

fn export_agrees(arch: &str, input: Shape, seed: u64) -> PlainNetwork {
    let mut net = LipNetwork::new(parse_arch(arch).unwrap(), input, Activation::Relu, 2.0, 1e-3, seed).unwrap();
    randomize(&mut net, seed, 0.3);
    let plain = net.export().unwrap();
    let mut rng = Lcg::new(seed + 1);
    let x = Mat::from_fn(4, input.len(), |_, _| rng.uniform());
    let a = net.forward(&x).unwrap();
    let b = plain.forward(&x).unwrap();
    assert!(a.max_abs_diff(&b) <= 1e-10 * a.max_abs().max(1.0), "{arch}: {}", a.max_abs_diff(&b));
    assert!(plain.certificate.as_ref().unwrap().certified);
    plain
}

#[test]
fn export_matches_training_forward() {
    let img = Shape::Image { h: 8, w: 8, c: 2 };
    export_agrees("c(3,3,1).f(5).f(2)", img, 1);
    export_agrees("c(4,4,2).c(3,3,1).f(4)", img, 2);
    export_agrees("c(3,3,1).p(av,2,2).c(2,2,1).p(max,2,2).f(3)", img, 3);
    export_agrees("c(3,3,2).p(max,2,1).f(3)", img, 4);
    export_agrees("f(6).f(2)", Shape::Vector(5), 5);
}

#[test]
fn export_of_2c2f_is_deterministic_and_certified() {
    let arch = parse_arch("c(16,4,2).c(32,4,2).f(100).f(10)").unwrap();
    let net = LipNetwork::new(arch, Shape::Image { h: 32, w: 32, c: 1 }, Activation::Relu, 2.0, 1e-3, 7).unwrap();
    let a = net.export().unwrap();
    let b = net.export().unwrap();
    assert_eq!(a, b);
    assert!(a.certificate.as_ref().unwrap().certified);
    assert_eq!(a.rho, Some(2.0));
    let mut rng = Lcg::new(3);
    let x = Mat::from_fn(2, 1024, |_, _| rng.uniform());
    let (ya, yb) = (net.forward(&x).unwrap(), a.forward(&x).unwrap());
    assert!(ya.max_abs_diff(&yb) <= 1e-10);
}

#[test]
fn exported_kernel_matches_state_space() {
    let mut net = LipNetwork::new(parse_arch("c(3,3,1).f(2)").unwrap(), Shape::Image { h: 6, w: 5, c: 2 }, Activation::Identity, 1.0, 1e-3, 9).unwrap();
    randomize(&mut net, 9, 0.5);
    let mats = net.materialize().unwrap();
    let Weights::Conv2d(real) = &mats[0].weights else { panic!() };
    let plain = net.export().unwrap();
    let PlainLayer::Conv { kernel, padding, .. } = &plain.layers[0] else { panic!() };
    assert_eq!(kernel, &kernel_from_realization_2d(real).unwrap());
    let (o1, o2) = padding.offsets(kernel.r1, kernel.r2);
    let (o1, o2) = (o1 as usize, o2 as usize);
    let mut rng = Lcg::new(1);
    let img = Image::from_vec(6, 5, 2, (0..60).map(|_| rng.normal()).collect());
    // the causal recursion on a zero-extended image, read back with the offset
    let mut ext = Image::zeros(6 + o1, 5 + o2, 2);
    for i in 0..6 {
        for j in 0..5 {
            ext.pixel_mut(i, j).copy_from_slice(img.pixel(i, j));
        }
    }
    let ss = ss_forward_2d(real, &ext).unwrap();
    let single = PlainNetwork::new(img_shape(&img), vec![plain.layers[0].clone()]).unwrap();
    let y = single.forward(&img.to_mat().reshaped(1, 60)).unwrap();
    let y = Image::from_vec(6, 5, 3, y.into_vec());
    for i in 0..6 {
        for j in 0..5 {
            for c in 0..3 {
                assert!((y.at(i, j, c) - ss.at(i + o1, j + o2, c)).abs() <= 1e-10);
            }
        }
    }
}

fn img_shape(img: &Image) -> Shape {
    Shape::Image { h: img.h, w: img.w, c: img.c }
}

#[test]
fn fourier_zero_parameters_pass_through() {
    let l = FourierOrthLayer::zeros(3, 3, 8).unwrap();
    let mut rng = Lcg::new(2);
    let x = Image::from_vec(8, 8, 3, (0..192).map(|_| rng.normal()).collect());
    let y = fourier_orth_forward(&l, &x).unwrap();
    assert!(y.max_abs_diff(&x) < 1e-12);
}

#[test]
fn fourier_square_preserves_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut lcg = Lcg::new(4);
    for (ci, co) in [(3usize, 3usize), (4, 2), (2, 5)] {
        let l = FourierOrthLayer::random(ci, co, 8, 1.0, &mut rng).unwrap();
        let x = Image::from_vec(8, 8, ci, (0..64 * ci).map(|_| lcg.normal()).collect());
        let y = fourier_orth_forward(&l, &x).unwrap();
        let (nx, ny) = (x.norm2(), y.norm2());
        match ci.cmp(&co) {
            core::cmp::Ordering::Equal => assert!((nx - ny).abs() <= 1e-8 * nx, "{nx} vs {ny}"),
            core::cmp::Ordering::Greater => assert!(ny <= nx * (1.0 + 1e-12)),
            core::cmp::Ordering::Less => assert!((nx - ny).abs() <= 1e-8 * nx),
        }
    }
}

#[test]
fn fourier_rejects_non_power_of_two() {
    assert!(matches!(FourierOrthLayer::zeros(2, 2, 6), Err(crate::Error::NonPowerOfTwo(6))));
}

#[test]
fn pooling_layer_shapes() {
    let net = PlainNetwork::new(
        Shape::Image { h: 4, w: 4, c: 1 },
        vec![PlainLayer::Pool { kind: PoolKind::Average, window: (2, 2), stride: (2, 2) }, PlainLayer::Flatten],
    )
    .unwrap();
    let x = Mat::from_fn(1, 16, |_, j| j as f64);
    let y = net.forward(&x).unwrap();
    assert_eq!(y.data(), &[2.5, 4.5, 10.5, 12.5]);
    let _unused: Vec<u8> = Vec::new();
}

#[test]
fn heavily_perturbed_stacked_convs_still_certify() {
    // stacked convolutions whose incoming gain is far from the identity
    let nets: [(&str, Shape); 2] = [
        ("c(2,3,2).c(3,3,1).p(max,2,2).f(3)", Shape::Image { h: 8, w: 8, c: 2 }),
        ("c(2,3,1).c(2,3,1).p(av,2,2).f(4).f(2)", Shape::Image { h: 4, w: 4, c: 1 }),
    ];
    for k in 0..40u64 {
        let (arch, input) = nets[k as usize % 2];
        let mut net = LipNetwork::new(parse_arch(arch).unwrap(), input, Activation::Relu, 1.0, 1e-3, k).unwrap();
        randomize(&mut net, 500 + k, if k < 20 { 0.25 } else { 1.0 });
        let plain = net.export().unwrap_or_else(|e| panic!("{arch} seed {k}: {e}"));
        assert!(plain.certificate.as_ref().is_some_and(|c| c.certified), "{arch} seed {k}");
    }
}
