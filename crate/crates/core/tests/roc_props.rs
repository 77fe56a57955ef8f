mod common;

use common::brute_auroc;
use gazegrade::evaluation::roc::{auroc, mean_roc_curve, roc_curve};
use proptest::prelude::*;

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec(
        ((0u8..20).prop_map(|v| f64::from(v) / 19.0), any::<bool>()),
        2..200,
    )
    .prop_filter("both classes", |rows| {
        rows.iter().any(|r| r.1) && rows.iter().any(|r| !r.1)
    })
    .prop_map(|rows| rows.into_iter().unzip())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn auroc_matches_pair_counting((scores, labels) in scored_labels()) {
        let fast = auroc(&scores, &labels).unwrap();
        prop_assert!((fast - brute_auroc(&scores, &labels)).abs() < 1e-12);
        let curve = roc_curve(&scores, &labels).unwrap();
        prop_assert!((curve.area() - fast).abs() < 1e-12);
        for w in curve.points.windows(2) {
            prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
        let last = curve.points.last().unwrap();
        prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }

    #[test]
    fn auroc_is_invariant_to_monotone_transforms((scores, labels) in scored_labels()) {
        let squashed: Vec<f64> = scores.iter().map(|s| (3.0 * s - 1.0).exp() / 7.0 + 2.0).collect();
        prop_assert!((auroc(&scores, &labels).unwrap() - auroc(&squashed, &labels).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn flipping_labels_complements_auroc((scores, labels) in scored_labels()) {
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        let sum = auroc(&scores, &labels).unwrap() + auroc(&scores, &flipped).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_curve_of_identical_curves_is_that_curve((scores, labels) in scored_labels()) {
        let curve = roc_curve(&scores, &labels).unwrap();
        let mean = mean_roc_curve(&[curve.clone(), curve.clone()], 0.01);
        // the averaged curve is pinned to the origin
        for p in mean.iter().skip(1) {
            prop_assert!((p.tpr - curve.tpr_at(p.fpr)).abs() < 1e-12);
        }
    }
}

#[test]
fn single_class_is_an_error() {
    assert!(auroc(&[0.1, 0.2], &[true, true]).is_err());
    assert!(auroc(&[0.1, 0.2], &[true]).is_err());
    assert_eq!(auroc(&[0.3, 0.3], &[true, false]).unwrap(), 0.5);
}
