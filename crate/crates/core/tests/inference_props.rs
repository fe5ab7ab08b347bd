use promise_core::inference::{augment_text, protected_prefix_len, TtaConfig};
use proptest::prelude::*;

const WORDS: &[&str] = &["we", "will", "reduce", "emissions", "by", "40%", "before", "2030", "-", "audited", "report."];

fn input() -> impl Strategy<Value = String> {
    (
        1u32..200,
        prop::sample::select(vec!["ESG REPORT", "CSR REPORT", "ANNUAL REPORT"]),
        prop::bool::ANY,
        prop::collection::vec(prop::sample::select(WORDS), 1..30),
    )
        .prop_map(|(page, tag, tagged, words)| {
            let block = if tagged { "Vague_Terms_1. Specific_Terms_3. " } else { "" };
            format!("[PAGE {page}] [{tag}] {block}{}", words.join(" "))
        })
}

proptest! {
    #[test]
    fn prefix_survives_augmentation(text in input(), rate in 0.0f64..0.9, pass in 0usize..6, seed in any::<u64>()) {
        let config = TtaConfig { word_dropout_rate: rate, seed, vary_metadata: false, ..TtaConfig::default() };
        let out = augment_text(&text, &config, pass);
        let prefix = &text[..protected_prefix_len(&text)];
        prop_assert!(out.starts_with(prefix));
        prop_assert!(out.len() <= text.len());
        if pass == 0 {
            prop_assert_eq!(&out, &text);
        }
        prop_assert_eq!(out.clone(), augment_text(&text, &config, pass));
    }

    #[test]
    fn metadata_variation_keeps_page_and_tags(text in input(), pass in 1usize..6) {
        let config = TtaConfig { word_dropout_rate: 0.0, ..TtaConfig::default() };
        let out = augment_text(&text, &config, pass);
        let page_end = text.find("] ").unwrap() + 2;
        prop_assert!(out.starts_with(&text[..page_end]));
        let body_start = protected_prefix_len(&text);
        prop_assert!(out.ends_with(&text[body_start..]));
        prop_assert_eq!(protected_prefix_len(&out) - (out.len() - text.len() + body_start), 0);
    }

    #[test]
    fn mean_of_passes_is_bounded(ps in prop::collection::vec(0.0f64..1.0, 1..8)) {
        let mean = ps.iter().sum::<f64>() / ps.len() as f64;
        let lo = ps.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo - 1e-15 <= mean && mean <= hi + 1e-15);
    }
}
