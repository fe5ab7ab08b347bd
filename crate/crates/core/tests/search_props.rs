use promise_core::trainer::{sample_trial, select_best, SearchSpace, TpeSettings, TrialResult};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn proposals_stay_in_space(seed in any::<u64>(), losses in prop::collection::vec(0.0f64..5.0, 0..12)) {
        let space = SearchSpace::default();
        let settings = TpeSettings::default();
        let mut history = Vec::new();
        for (i, loss) in losses.iter().enumerate() {
            let t = sample_trial(&space, i, seed, &history, &settings);
            prop_assert!(space.contains(&t), "{:?}", t);
            prop_assert_eq!(t.trial_index, i);
            prop_assert_eq!(&t, &sample_trial(&space, i, seed, &history, &settings));
            history.push(TrialResult::new(t, vec![*loss], vec![1]));
        }
        let t = sample_trial(&space, losses.len(), seed, &history, &settings);
        prop_assert!(space.contains(&t));
        if let Some(best) = select_best(&history) {
            prop_assert!(history.iter().all(|h| h.mean_validation_loss >= best.mean_validation_loss));
        }
    }
}
