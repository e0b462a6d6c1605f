use lipkernel::bench::{bench_inference, machine_info, BenchSpec, Engine, CSV_HEADER};
use lipkernel::Error;

fn spec(channels: usize, image: usize, engine: Engine) -> BenchSpec {
    BenchSpec { channels, image, kernel: 3, engine }
}

#[test]
fn engine_names_round_trip() {
    for e in [Engine::KernelDomain, Engine::FourierDomain] {
        assert_eq!(Engine::from_name(e.name()), Some(e));
    }
    assert_eq!(Engine::from_name("kernel"), Some(Engine::KernelDomain));
    assert_eq!(Engine::from_name("fft"), None);
}

#[test]
fn zero_reps_is_rejected() {
    assert!(matches!(bench_inference(spec(4, 8, Engine::KernelDomain), 0, 0), Err(Error::InvalidSpec(_))));
}

#[test]
fn rows_match_header() {
    let r = bench_inference(spec(4, 8, Engine::FourierDomain), 2, 0).unwrap();
    assert_eq!(r.reps, 2);
    assert!(r.avg_ms > 0.0 && r.std_ms >= 0.0);
    let row = r.csv_row();
    assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
    assert!(row.starts_with("fourier-domain,4,8,3,"));
    assert!(!machine_info().is_empty());
}

#[test]
fn fourier_cost_grows_faster_than_channels() {
    let t = |c| bench_inference(spec(c, 16, Engine::FourierDomain), 3, 1).unwrap().avg_ms;
    let (small, large) = (t(8), t(32));
    assert!(large > 4.0 * small, "8 channels {small} ms, 32 channels {large} ms");
}
