//! Synthetic labelled corpora in the record schema. Every label is
//! signalled by class-specific cue words scattered among filler, so the
//! data are separable by a bag-of-words model.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Binary, Clarity, LabelClass, LabelSet, PromiseRecord, Timing};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_records: usize,
    pub seed: u64,
    pub promise_rate: f64,
    /// Share of promises that come with evidence.
    pub evidence_rate: f64,
    pub filler_words: (usize, usize),
    /// How many synonyms of each cue word are in use (1 to 3).
    pub cue_variants: usize,
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_records: 200,
            seed: 42,
            promise_rate: 0.7,
            evidence_rate: 0.6,
            filler_words: (6, 12),
            cue_variants: 2,
            id_prefix: "syn".into(),
        }
    }
}

const FILLER: &[&str] = &[
    "the", "company", "group", "operations", "sites", "energy", "water", "supply", "chain",
    "employees", "community", "report", "section", "during", "across", "regional", "business",
    "products", "customers", "board", "policy", "programme", "facilities", "local", "partners",
    "year", "market", "services", "teams", "overall",
];
const PROMISE_YES: &[&str] = &["pledge", "commit", "undertake", "vow", "promise"];
const PROMISE_NO: &[&str] = &["recorded", "described", "observed", "listed", "summarised"];
const EVIDENCE_YES: &[&str] = &["audited", "certified", "verified", "documented", "measured"];
const EVIDENCE_NO: &[&str] = &["hopeful", "aspirational", "envisioned", "imagined", "wished"];
const CLARITY: [&[&str]; 3] = [
    &["precisely", "exactly", "specifically"],
    &["somewhat", "roughly", "loosely"],
    &["supposedly", "allegedly", "purportedly"],
];
const TIMING: [&[&str]; 4] = [
    &["imminently", "shortly", "promptly"],
    &["midterm", "intermediate", "medium"],
    &["eventually", "longterm", "decades"],
    &["continually", "perpetually", "ongoing"],
];
const SOURCES: &[&str] = &["ESG REPORT", "ESG REPORT", "ESG REPORT", "SUSTAINABILITY REPORT"];

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words.choose(rng).expect("non-empty word list")
}

fn cue<'a>(rng: &mut ChaCha8Rng, words: &[&'a str], variants: usize) -> &'a str {
    pick(rng, &words[..variants.clamp(1, words.len())])
}

/// Generates `config.n_records` records with all applicable labels set.
pub fn generate(config: &SynthConfig) -> Vec<PromiseRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.n_records)
        .map(|i| {
            let promise = rng.random::<f64>() < config.promise_rate;
            let mut words: Vec<&str> = Vec::new();
            let n_filler = rng.random_range(config.filler_words.0..=config.filler_words.1);
            words.extend((0..n_filler).map(|_| pick(&mut rng, FILLER)));
            let labels = if promise {
                let evidence = rng.random::<f64>() < config.evidence_rate;
                let clarity = Clarity::ALL[rng.random_range(0..3)];
                let timing = Timing::ALL[rng.random_range(0..4)];
                words.push(cue(&mut rng, PROMISE_YES, config.cue_variants));
                words.push(cue(&mut rng, if evidence { EVIDENCE_YES } else { EVIDENCE_NO }, config.cue_variants));
                words.push(cue(&mut rng, CLARITY[clarity.index()], config.cue_variants));
                words.push(cue(&mut rng, TIMING[timing.index()], config.cue_variants));
                LabelSet {
                    promise_status: Binary::Yes,
                    evidence_status: Some(if evidence { Binary::Yes } else { Binary::No }),
                    clarity: Some(clarity),
                    timing: Some(timing),
                }
            } else {
                words.push(cue(&mut rng, PROMISE_NO, config.cue_variants));
                LabelSet {
                    promise_status: Binary::No,
                    evidence_status: None,
                    clarity: None,
                    timing: None,
                }
            };
            words.shuffle(&mut rng);
            let mut text = words.join(" ");
            if let Some(first) = text.get(..1) {
                text.replace_range(..1, &first.to_uppercase());
            }
            text.push('.');
            PromiseRecord::new(format!("{}-{i:04}", config.id_prefix), text)
                .with_page(rng.random_range(1..=120))
                .with_source_tag(pick(&mut rng, SOURCES))
                .with_labels(labels)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_consistent() {
        let config = SynthConfig::default();
        let a = generate(&config);
        assert_eq!(a, generate(&config));
        assert_eq!(a.len(), 200);
        assert!(a.iter().all(|r| r.labels.as_ref().unwrap().dependency_violation().is_none()));
        let promises = a.iter().filter(|r| r.class_of(crate::corpus::Subtask::Promise) == Some(1)).count();
        assert!((100..180).contains(&promises), "{promises}");
        let other = generate(&SynthConfig {
            seed: 7,
            ..SynthConfig::default()
        });
        assert_ne!(a[0].raw_text, other[0].raw_text);
    }
}
