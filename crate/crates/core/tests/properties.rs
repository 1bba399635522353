use proptest::prelude::*;

use mutualctr::autodiff::{Tape, Tensor};
use mutualctr::data::{split, split_sizes, Example};
use mutualctr::eval::{auc, auc_bruteforce, relaimp};
use mutualctr::training::{lr_at, mse_loss};

/// Scores on a coarse grid, so ties are common, with both classes present.
fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..300).prop_flat_map(|n| {
        (
            prop::collection::vec((0u32..20).prop_map(|s| s as f64 / 20.0), n),
            prop::collection::vec(0u8..2, n - 2),
        )
            .prop_map(|(scores, mut labels)| {
                labels.push(0);
                labels.push(1);
                (scores, labels)
            })
    })
}

proptest! {
    #[test]
    fn auc_matches_pairwise_count((scores, labels) in scored()) {
        let fast = auc(&scores, &labels).unwrap();
        let slow = auc_bruteforce(&scores, &labels).unwrap();
        prop_assert!((fast - slow).abs() <= 1e-12, "{} vs {}", fast, slow);
        prop_assert!((0.0..=1.0).contains(&fast));
    }

    #[test]
    fn auc_ignores_increasing_transforms((scores, labels) in scored(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let warped: Vec<f64> = scores.iter().map(|s| (a * s).exp() + b).collect();
        prop_assert_eq!(auc(&warped, &labels).unwrap(), auc(&scores, &labels).unwrap());
    }

    #[test]
    fn negated_scores_complement_auc((scores, labels) in scored()) {
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let sum = auc(&neg, &labels).unwrap() + auc(&scores, &labels).unwrap();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn relaimp_increases_with_auc(base in 0.51f64..0.99, x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let (lo, hi) = if x < y { (x, y) } else { (y, x) };
        prop_assert!(relaimp(lo, base).unwrap() <= relaimp(hi, base).unwrap());
        prop_assert!(relaimp(base, base).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn mse_gradients_are_opposite(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..40)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let mut tape = Tape::new();
        let p1 = tape.param("p1", &Tensor::vector(a.clone()).unwrap());
        let p2 = tape.param("p2", &Tensor::vector(b.clone()).unwrap());
        let loss = mse_loss(&mut tape, p1, p2).unwrap();
        let mean = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
        prop_assert!((tape.value(loss).data()[0] - mean).abs() <= 1e-12);
        let g = tape.backward(loss).unwrap();
        for (x, y) in g.get("p1").unwrap().data().iter().zip(g.get("p2").unwrap().data()) {
            prop_assert!((x + y).abs() <= 1e-15);
        }
    }

    #[test]
    fn split_is_an_ordered_partition(n in 10usize..2000, train in 0.5f64..0.9) {
        let rest = (1.0 - train) / 2.0;
        let ratios = [train, rest, 1.0 - train - rest];
        let rows: Vec<Example> = (0..n).map(|i| Example { label: (i % 2) as u8, cat: vec![i as u32], num: vec![] }).collect();
        let sizes = split_sizes(n, ratios).unwrap();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        let s = split(rows.clone(), ratios).unwrap();
        prop_assert_eq!([s.train.len(), s.dev.len(), s.test.len()], sizes);
        let joined: Vec<Example> = s.train.iter().chain(&s.dev).chain(&s.test).cloned().collect();
        prop_assert_eq!(joined, rows);
    }

    #[test]
    fn learning_rate_decays(t in 0.0f64..20.0, dt in 0.001f64..5.0) {
        prop_assert!(lr_at(1e-3, t + dt) < lr_at(1e-3, t));
        let ratio = lr_at(1e-3, t + 3.0) / lr_at(1e-3, t);
        prop_assert!((ratio - 0.1).abs() <= 1e-12);
    }

    #[test]
    fn sigmoid_stays_inside_unit_interval(xs in prop::collection::vec(-30.0f64..30.0, 1..50)) {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(xs).unwrap());
        let s = tape.sigmoid(x);
        prop_assert!(tape.value(s).data().iter().all(|&p| p > 0.0 && p < 1.0));
    }
}
