use std::collections::HashSet;

use promise_core::corpus::{holdout_split, stratified_kfold, Binary, Clarity, LabelSet, PromiseRecord, Subtask};
use proptest::prelude::*;

fn corpus(labels: &[(bool, Option<bool>, u8)]) -> Vec<PromiseRecord> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &(promise, evidence, clarity))| {
            let labels = if promise {
                LabelSet {
                    promise_status: Binary::Yes,
                    evidence_status: evidence.map(|e| if e { Binary::Yes } else { Binary::No }),
                    clarity: Some([Clarity::Clear, Clarity::NotClear, Clarity::Misleading][clarity as usize % 3]),
                    timing: None,
                }
            } else {
                LabelSet {
                    promise_status: Binary::No,
                    evidence_status: None,
                    clarity: None,
                    timing: None,
                }
            };
            PromiseRecord::new(format!("r{i:03}"), "text").with_labels(labels)
        })
        .collect()
}

fn labels() -> impl Strategy<Value = Vec<(bool, Option<bool>, u8)>> {
    prop::collection::vec((any::<bool>(), prop::option::of(any::<bool>()), 0u8..3), 8..120)
}

proptest! {
    #[test]
    fn kfold_partitions_and_balances(labels in labels(), k in 2usize..6, seed in any::<u64>()) {
        let records = corpus(&labels);
        let Ok(folds) = stratified_kfold(&records, k, Subtask::Promise, seed) else {
            // Some class has fewer than k members.
            let yes = labels.iter().filter(|l| l.0).count();
            prop_assert!(yes < k || records.len() - yes < k);
            return Ok(());
        };
        prop_assert_eq!(folds.len(), k);
        let mut seen = HashSet::new();
        for f in &folds {
            prop_assert_eq!(f.train_ids.len() + f.validation_ids.len(), records.len());
            let train: HashSet<_> = f.train_ids.iter().collect();
            for id in &f.validation_ids {
                prop_assert!(!train.contains(id));
                prop_assert!(seen.insert(id.clone()));
            }
        }
        prop_assert_eq!(seen.len(), records.len());
        for class in [Binary::No, Binary::Yes] {
            let per_fold: Vec<usize> = folds
                .iter()
                .map(|f| {
                    f.validation_ids
                        .iter()
                        .filter(|id| records.iter().find(|r| &r.id == *id).unwrap().labels.as_ref().unwrap().promise_status == class)
                        .count()
                })
                .collect();
            prop_assert!(per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap() <= 1);
        }
        let sizes: Vec<usize> = folds.iter().map(|f| f.validation_ids.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn kfold_is_deterministic(labels in labels(), seed in any::<u64>()) {
        let records = corpus(&labels);
        let a = stratified_kfold(&records, 2, Subtask::Promise, seed);
        let b = stratified_kfold(&records, 2, Subtask::Promise, seed);
        prop_assert_eq!(a.ok(), b.ok());
    }

    #[test]
    fn holdout_partitions(labels in labels(), percent in 50usize..95, seed in any::<u64>()) {
        let records = corpus(&labels);
        let Ok((train, val)) = holdout_split(&records, percent as f64 / 100.0, Subtask::Promise, seed) else {
            return Ok(());
        };
        prop_assert_eq!(train.len() + val.len(), records.len());
        let train: HashSet<_> = train.into_iter().collect();
        prop_assert!(val.iter().all(|id| !train.contains(id)));
        let expected = (records.len() as f64 * (100 - percent) as f64 / 100.0).round() as i64;
        prop_assert!((val.len() as i64 - expected).abs() <= 1);
    }
}
