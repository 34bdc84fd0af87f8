use proptest::prelude::*;
use volstm::data::st4d::{decode, encode};
use volstm::data::StoredTensor;
use volstm::optim::{softmax, softmax_cross_entropy};
use volstm::tensor::{conv3d_forward, output_extent, ConvSpec};
use volstm::training::{crop_starts, kfold_split};
use volstm::Tensor;

mod common;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv3d_output_follows_size_formula(
        n in prop::array::uniform3(1usize..8),
        k in 1usize..4,
        s in 1usize..3,
        p in 0usize..2,
        cin in 1usize..3,
        cout in 1usize..3,
    ) {
        let spec = ConvSpec::cubic(cin, cout, k, s, p);
        let x = Tensor::<f64>::from_fn(&[cin, n[0], n[1], n[2]], |i| (i as f64).sin());
        let w = Tensor::from_fn(&spec.weight_dims(), |i| (i as f64).cos());
        let b = Tensor::zeros(&[cout]);
        let expected: Option<Vec<usize>> = n.iter().map(|&m| output_extent(m, k, s, p)).collect();
        match (conv3d_forward(&x, &w, &b, &spec), expected) {
            (Ok(y), Some(e)) => {
                prop_assert_eq!(y.dims()[0], cout);
                prop_assert_eq!(&y.dims()[1..], &e[..]);
                for (m, o) in n.iter().zip(&e) {
                    prop_assert_eq!(*o, (m + 2 * p - k) / s + 1);
                }
            }
            (Err(_), None) => {}
            (got, e) => prop_assert!(false, "{:?} vs {:?}", got.map(|y| y.dims().to_vec()), e),
        }
    }

    #[test]
    fn softmax_is_a_shift_invariant_distribution(
        logits in prop::collection::vec(-30.0f64..30.0, 2..6),
        shift in -100.0f64..100.0,
    ) {
        let a = softmax(&Tensor::new(&[logits.len()], logits.clone()).unwrap());
        let b = softmax(&Tensor::new(&[logits.len()], logits.iter().map(|v| v + shift).collect()).unwrap());
        prop_assert!((a.sum() - 1.0).abs() <= 1e-12);
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() <= 1e-12);
            prop_assert!(*x >= 0.0);
        }
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot(
        logits in prop::collection::vec(-10.0f64..10.0, 2..6),
        pick in 0usize..6,
    ) {
        let label = pick % logits.len();
        let t = Tensor::new(&[logits.len()], logits).unwrap();
        let (loss, g) = softmax_cross_entropy(&t, label).unwrap();
        let p = softmax(&t);
        prop_assert!((loss + p.data()[label].ln()).abs() <= 1e-12);
        for (c, (gv, pv)) in g.data().iter().zip(p.data()).enumerate() {
            let target = if c == label { 1.0 } else { 0.0 };
            prop_assert!((gv - (pv - target)).abs() <= 1e-15);
        }
    }

    #[test]
    fn crops_tile_the_series(t in 1usize..200, l in 1usize..50) {
        prop_assume!(l <= t);
        let starts = crop_starts(t, l).unwrap();
        let mut covered = vec![false; t];
        for &s in &starts {
            prop_assert!(s + l <= t);
            covered[s..s + l].iter_mut().for_each(|c| *c = true);
        }
        prop_assert!(covered.iter().all(|&c| c));
        prop_assert_eq!(starts.len(), t.div_ceil(l));
    }

    #[test]
    fn folds_are_disjoint_exhaustive_and_stratified(
        labels in prop::collection::vec(0u8..2, 10..60),
        k in 3usize..7,
        seed in any::<u64>(),
    ) {
        let folds = kfold_split(&labels, k, seed, true).unwrap();
        prop_assert_eq!(folds.len(), k);
        let bad = common::fold_violations(&labels, &folds);
        prop_assert!(bad.is_empty(), "{:?}", bad);
    }

    #[test]
    fn st4d_round_trip_is_bitwise(
        entries in prop::collection::vec(
            (prop::collection::vec(1usize..4, 1..=5), any::<bool>(), any::<u64>()),
            0..4,
        ),
    ) {
        let stored: Vec<(String, StoredTensor)> = entries
            .iter()
            .enumerate()
            .map(|(i, (dims, wide, bits))| {
                let t = Tensor::<f64>::from_fn(dims, |j| f64::from_bits(bits.rotate_left(j as u32) & !(0x7ff << 52) | (0x3ff << 52)));
                let st = if *wide { StoredTensor::F64(t) } else { StoredTensor::F32(t.cast()) };
                (format!("t{i}"), st)
            })
            .collect();
        let bytes = encode(&stored).unwrap();
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(&back, &stored);
        prop_assert_eq!(encode(&back).unwrap(), bytes);
    }
}
