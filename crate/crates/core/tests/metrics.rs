use proptest::prelude::*;
use psv_core::label::{LabelMask, NUM_CATEGORIES};
use psv_core::metrics::{ConfusionMatrix, MetricsError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::{metrics_oracle, random_pair, random_permutation, relabel};

#[test]
fn matches_brute_force_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..50 {
        let (pred, gt) = random_pair(&mut rng);
        let cm = ConfusionMatrix::from_pair(&pred, &gt).unwrap();
        let o = metrics_oracle(&pred, &gt);
        assert_eq!(cm.counts(), &o.cells);
        assert_eq!(cm.pixel_acc().unwrap(), o.pacc);
        assert_eq!(cm.mean_pixel_acc().unwrap(), o.macc);
        assert_eq!(cm.per_class_iou(), o.iou);
        assert_eq!(cm.mean_iou().unwrap(), o.miou);
    }
}

#[test]
fn permuting_categories_permutes_iou() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let (pred, gt) = random_pair(&mut rng);
        let perm = random_permutation(&mut rng);
        let a = ConfusionMatrix::from_pair(&pred, &gt).unwrap();
        let b = ConfusionMatrix::from_pair(&relabel(&pred, &perm), &relabel(&gt, &perm)).unwrap();
        let (ia, ib) = (a.per_class_iou(), b.per_class_iou());
        for c in 0..NUM_CATEGORIES {
            assert_eq!(ia[c], ib[perm[c] as usize]);
        }
        assert!((a.mean_iou().unwrap() - b.mean_iou().unwrap()).abs() < 1e-12);
        assert_eq!(a.pixel_acc().unwrap(), b.pixel_acc().unwrap());
    }
}

#[test]
fn metrics_lie_in_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let (pred, gt) = random_pair(&mut rng);
        let r = ConfusionMatrix::from_pair(&pred, &gt).unwrap().report().unwrap();
        for v in [r.pixel_acc, r.mean_pixel_acc, r.mean_iou].into_iter().chain(r.per_class_iou.into_iter().flatten()) {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn report_row_for_perfect_prediction_is_all_hundred() {
    let gt = LabelMask::from_raw(6, 1, (0..6).collect()).unwrap();
    let row = ConfusionMatrix::from_pair(&gt, &gt).unwrap().report().unwrap().table_row("oracle");
    assert_eq!(row.matches("100.00").count(), 8, "{row}");
}

#[test]
fn mismatched_sizes_are_rejected() {
    let r = ConfusionMatrix::from_pair(&LabelMask::new(2, 2), &LabelMask::new(2, 3));
    assert!(matches!(r, Err(MetricsError::Size { .. })));
}

proptest! {
    #[test]
    fn accumulation_is_additive_over_disjoint_pixels(
        a in prop::collection::vec(0u8..6, 20),
        b in prop::collection::vec(0u8..6, 20),
        split in 1usize..19,
    ) {
        let m = |v: &[u8]| LabelMask::from_raw(v.len(), 1, v.to_vec()).unwrap();
        let whole = ConfusionMatrix::from_pair(&m(&a), &m(&b)).unwrap();
        let left = ConfusionMatrix::from_pair(&m(&a[..split]), &m(&b[..split])).unwrap();
        let right = ConfusionMatrix::from_pair(&m(&a[split..]), &m(&b[split..])).unwrap();
        prop_assert_eq!(whole, left + right);
        prop_assert_eq!(whole.total(), 20);
    }
}
