use promise_core::corpus::{PromiseRecord, Subtask};
use promise_core::featurizer::{parse_tag_block, Features, Featurizer, Polarity};
use proptest::prelude::*;

fn features() -> impl Strategy<Value = Features> {
    prop_oneof![
        (any::<bool>(), any::<bool>()).prop_map(|(p, w)| Features::Promise {
            sentiment: if p { Polarity::Positive } else { Polarity::Negative },
            has_promise_word: w,
        }),
        (0usize..50, any::<bool>(), any::<bool>()).prop_map(|(c, n, d)| Features::Evidence {
            proof_count: c,
            has_numbers: n,
            has_dates: d,
        }),
        (0usize..50, 0usize..50).prop_map(|(v, s)| Features::Clarity {
            vague_terms: v,
            specific_terms: s,
        }),
        (prop::array::uniform4(0usize..20), prop::collection::vec("20[2-9][0-9]", 0..4)).prop_map(|(h, d)| {
            Features::Timing {
                horizon_terms: h,
                dates: d,
            }
        }),
    ]
}

const WORDS: &[&str] = &[
    "we", "will", "might", "reduce", "emissions", "by", "2030", "audited", "report", "the", "approximately",
    "target", "percent", "15%", "consider", "our", "commit", "verified", "possibly", "tonnes",
];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 1..25).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn tag_block_round_trips(f in features(), body in sentence()) {
        let text = format!("{}{}", f.render(), body);
        let (parsed, len) = parse_tag_block(&text).expect("rendered block parses");
        prop_assert_eq!(parsed, f.clone());
        prop_assert_eq!(len, f.render().len());
    }

    #[test]
    fn enrichment_is_prefix_plus_text(body in sentence(), subtask in prop::sample::select(Subtask::ALL.to_vec())) {
        let f = Featurizer::default();
        let enriched = f.enrich_record(subtask, &PromiseRecord::new("p", body.clone())).unwrap();
        prop_assert!(enriched.ends_with(&body));
        let (features, len) = parse_tag_block(&enriched).unwrap();
        prop_assert_eq!(features.subtask(), subtask);
        prop_assert_eq!(&enriched[len..], body.as_str());
        // Enriching twice is refused.
        prop_assert!(f.enrich_record(subtask, &PromiseRecord::new("p", enriched)).is_err());
    }

    #[test]
    fn counts_grow_with_appended_text(a in sentence(), b in sentence()) {
        let f = Featurizer::default();
        let joined = format!("{a} {b}");
        let counts = |text: &str| match f.annotate(Subtask::Clarity, text).unwrap().features {
            Features::Clarity { vague_terms, specific_terms } => (vague_terms, specific_terms),
            _ => unreachable!(),
        };
        let (v1, s1) = counts(&a);
        let (v2, s2) = counts(&joined);
        prop_assert!(v2 >= v1 && s2 >= s1);
        let proof = |text: &str| match f.annotate(Subtask::Evidence, text).unwrap().features {
            Features::Evidence { proof_count, .. } => proof_count,
            _ => unreachable!(),
        };
        prop_assert!(proof(&joined) >= proof(&a));
    }
}
