use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;

#[test]
fn cosine_samples_are_exact() {
    let ds = cosine_dataset(500, 3).unwrap();
    let Targets::Values(y) = &ds.targets else { panic!() };
    for i in 0..500 {
        let x = ds.inputs[(i, 0)];
        assert!((-FRAC_PI_2..=FRAC_PI_2).contains(&x));
        assert_eq!(y[(i, 0)], x.cos());
        assert!((0.0..=1.0).contains(&y[(i, 0)]));
    }
    assert_eq!(ds, cosine_dataset(500, 3).unwrap());
    assert_ne!(ds, cosine_dataset(500, 4).unwrap());
    assert!(cosine_dataset(0, 0).is_err());
    assert_eq!(0.0f64.cos(), 1.0);
    let g = cosine_grid(3);
    assert_eq!(g.data(), &[-FRAC_PI_2, 0.0, FRAC_PI_2]);
}

#[test]
fn single_batch_when_size_is_count() {
    let ds = cosine_dataset(17, 0).unwrap();
    let all: Vec<Batch> = batches(&ds, 17, Some(5)).unwrap().collect();
    assert_eq!(all.len(), 1);
    assert_eq!(all[0].inputs.rows(), 17);
    let parts: Vec<Batch> = batches(&ds, 5, Some(5)).unwrap().collect();
    assert_eq!(parts.iter().map(|b| b.indices.len()).collect::<Vec<_>>(), [5, 5, 5, 2]);
    assert!(batches(&ds, 0, None).is_err());
    let order = |s| batches(&ds, 4, Some(s)).unwrap().flat_map(|b| b.indices).collect::<Vec<_>>();
    assert_eq!(order(9), order(9));
    assert_ne!(order(9), order(10));
}

proptest! {
    #[test]
    fn batches_partition_the_dataset(n in 1usize..60, size in 1usize..20, seed in any::<u64>()) {
        let ds = cosine_dataset(n, 1).unwrap();
        let mut seen: Vec<usize> = Vec::new();
        for b in batches(&ds, size, Some(seed)).unwrap() {
            for (k, &i) in b.indices.iter().enumerate() {
                prop_assert_eq!(b.inputs.row_slice(k), ds.inputs.row_slice(i));
            }
            seen.extend(b.indices);
        }
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn idx_round_trip(n in 0usize..5, r in 1usize..6, c in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let px: Vec<u8> = (0..n * r * c).map(|_| rng.random()).collect();
        let lab: Vec<u8> = (0..n).map(|_| rng.random_range(0..10)).collect();
        let (ib, lb) = (encode_idx_images(r, c, &px), encode_idx_labels(&lab));
        let (n2, r2, c2, px2) = parse_idx_images(&ib).unwrap();
        prop_assert_eq!((n2, r2, c2), (n, r, c));
        prop_assert_eq!(&px2, &px);
        prop_assert_eq!(parse_idx_labels(&lb).unwrap(), lab.clone());
        prop_assert_eq!(encode_idx_images(r, c, &px2), ib);
    }
}

#[test]
fn idx_errors() {
    let ib = encode_idx_images(2, 2, &[1, 2, 3, 4, 5, 6, 7, 8]);
    let lb = encode_idx_labels(&[1, 2]);
    assert!(matches!(parse_idx_images(&ib[..ib.len() - 1]), Err(Error::TruncatedFile { .. })));
    assert!(matches!(parse_idx_images(&ib[..3]), Err(Error::TruncatedFile { .. })));
    assert!(matches!(parse_idx_images(&lb), Err(Error::BadMagic { found: IDX_LABELS_MAGIC, .. })));
    assert!(matches!(parse_idx_labels(&ib), Err(Error::BadMagic { .. })));
    assert!(matches!(mnist_from_idx(&ib, &encode_idx_labels(&[1])), Err(Error::CountMismatch { images: 2, labels: 1 })));
}

#[test]
fn mnist_is_scaled_and_padded() {
    let px: Vec<u8> = (0..2 * 28 * 28).map(|i| (i % 256) as u8).collect();
    let ds = mnist_from_idx(&encode_idx_images(28, 28, &px), &encode_idx_labels(&[3, 7])).unwrap();
    assert_eq!(ds.shape, Shape::Image { h: 32, w: 32, c: 1 });
    assert_eq!(ds.labels().unwrap(), &[3, 7]);
    assert_eq!(ds.norm, Normalization { divisor: 255.0, pad: 2 });
    for s in 0..2 {
        let row = ds.inputs.row_slice(s);
        assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        for i in 0..32 {
            for j in 0..32 {
                let v = row[i * 32 + j];
                if !(2..30).contains(&i) || !(2..30).contains(&j) {
                    assert_eq!(v, 0.0);
                } else {
                    assert_eq!(v, px[s * 784 + (i - 2) * 28 + (j - 2)] as f64 / 255.0);
                }
            }
        }
    }
    let zeros = mnist_from_idx(&encode_idx_images(28, 28, &[0; 3 * 784]), &encode_idx_labels(&[0, 0, 0])).unwrap();
    assert_eq!(zeros.inputs.max_abs(), 0.0);
    assert_eq!(zeros.len(), 3);
}

#[test]
fn subsets_keep_targets_aligned() {
    let ds = cosine_dataset(10, 2).unwrap();
    let s = ds.subset(&[4, 1]);
    let Targets::Values(y) = &s.targets else { panic!() };
    assert_eq!(y[(0, 0)], ds.inputs[(4, 0)].cos());
    assert_eq!(ds.take(3).len(), 3);
    assert_eq!(ds.take(30).len(), 10);
}
