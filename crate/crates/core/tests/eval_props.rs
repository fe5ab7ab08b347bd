use promise_core::eval::{confusion_matrix, f1_score, Averaging};
use proptest::prelude::*;

fn pairs() -> impl Strategy<Value = (Vec<usize>, Vec<usize>, usize)> {
    (2usize..5).prop_flat_map(|k| {
        (1usize..80).prop_flat_map(move |n| {
            (prop::collection::vec(0..k, n), prop::collection::vec(0..k, n), Just(k))
        })
    })
}

/// Per-class F1 from counts, computed by direct enumeration.
fn class_f1(pred: &[usize], gold: &[usize], c: usize) -> f64 {
    let tp = pred.iter().zip(gold).filter(|(p, g)| **p == c && **g == c).count() as f64;
    let fp = pred.iter().zip(gold).filter(|(p, g)| **p == c && **g != c).count() as f64;
    let fn_ = pred.iter().zip(gold).filter(|(p, g)| **p != c && **g == c).count() as f64;
    if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) }
}

proptest! {
    #[test]
    fn f1_matches_enumeration((pred, gold, k) in pairs()) {
        let present: Vec<usize> = (0..k).filter(|c| pred.contains(c) || gold.contains(c)).collect();
        let expected = present.iter().map(|&c| class_f1(&pred, &gold, c)).sum::<f64>() / present.len() as f64;
        prop_assert!((f1_score(&pred, &gold, Averaging::Macro).unwrap() - expected).abs() < 1e-12);
        let binary_pred: Vec<usize> = pred.iter().map(|p| p % 2).collect();
        let binary_gold: Vec<usize> = gold.iter().map(|g| g % 2).collect();
        let b = f1_score(&binary_pred, &binary_gold, Averaging::Binary).unwrap();
        prop_assert!((b - class_f1(&binary_pred, &binary_gold, 1)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&b));
    }

    #[test]
    fn perfect_predictions_score_one((_, gold, _) in pairs()) {
        prop_assert_eq!(f1_score(&gold, &gold, Averaging::Macro).unwrap(), 1.0);
    }

    #[test]
    fn confusion_counts_every_pair((pred, gold, k) in pairs()) {
        let m = confusion_matrix(&pred, &gold, k).unwrap();
        prop_assert_eq!(m.iter().flatten().sum::<usize>(), pred.len());
        for (c, row) in m.iter().enumerate() {
            prop_assert_eq!(row.iter().sum::<usize>(), gold.iter().filter(|&&g| g == c).count());
        }
    }
}
