//! Subtask-specific linguistic feature tags prepended to the input text.
//!
//! Each featurizer is a pure function of the text, its lexicons and the
//! detector or scorer it is given. The result is a [`FeatureAnnotation`]
//! whose `tag_text` is a block of `TAG. ` items in a fixed order.

mod detect;
mod lexicon;
mod sentiment;
mod tags;

use crate::corpus::{PromiseRecord, Subtask};
use crate::error::{Error, Result};
use crate::hashing::fnv1a;

pub use detect::{Entity, EntityDetector, EntityKind, RegexDetector};
pub use lexicon::{
    stem_tokens, Lexicon, LexiconSet, MatchMode, DEFAULT_REFERENCE_YEAR, LEXICON_VERSION,
};
pub use sentiment::{FixedSentiment, LexiconSentiment, Polarity, SentimentScorer};
pub use tags::{parse_tag_block, Features};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureAnnotation {
    pub subtask: Subtask,
    pub tag_text: String,
    pub features: Features,
    source_fingerprint: u64,
}

impl FeatureAnnotation {
    fn new(text: &str, features: Features) -> Self {
        Self {
            subtask: features.subtask(),
            tag_text: features.render(),
            features,
            source_fingerprint: fnv1a(text.as_bytes()),
        }
    }

    /// Whether this annotation was produced from `text`.
    pub fn describes(&self, text: &str) -> bool {
        self.source_fingerprint == fnv1a(text.as_bytes())
    }
}

fn require_text(text: &str) -> Result<()> {
    if text.trim().is_empty() {
        Err(Error::InvalidArgument("cannot featurize empty text".into()))
    } else {
        Ok(())
    }
}

/// Sentiment tag, then promise-word tag. A failing scorer falls back to
/// NEGATIVE.
pub fn featurize_promise(
    text: &str,
    promise_terms: &Lexicon,
    sentiment: &dyn SentimentScorer,
) -> Result<FeatureAnnotation> {
    require_text(text)?;
    let polarity = sentiment.polarity(text).unwrap_or_else(|e| {
        log::warn!("sentiment scorer failed ({e}); using NEGATIVE");
        Polarity::Negative
    });
    Ok(FeatureAnnotation::new(
        text,
        Features::Promise {
            sentiment: polarity,
            has_promise_word: promise_terms.count(text) > 0,
        },
    ))
}

/// `Proof_Count_<n>` counts metric and proof terms together, then
/// `Has_Numbers` and `Has_Dates` when the detector finds them.
pub fn featurize_evidence(
    text: &str,
    metric: &Lexicon,
    proof: &Lexicon,
    detector: &dyn EntityDetector,
) -> Result<FeatureAnnotation> {
    require_text(text)?;
    let tokens = stem_tokens(text);
    let entities = detector.detect(text);
    Ok(FeatureAnnotation::new(
        text,
        Features::Evidence {
            proof_count: metric.count_in_tokens(&tokens) + proof.count_in_tokens(&tokens),
            has_numbers: entities.iter().any(|e| e.kind == EntityKind::Number),
            has_dates: entities.iter().any(|e| e.kind == EntityKind::Date),
        },
    ))
}

pub fn featurize_clarity(
    text: &str,
    vague: &Lexicon,
    specific: &Lexicon,
) -> Result<FeatureAnnotation> {
    require_text(text)?;
    let tokens = stem_tokens(text);
    Ok(FeatureAnnotation::new(
        text,
        Features::Clarity {
            vague_terms: vague.count_in_tokens(&tokens),
            specific_terms: specific.count_in_tokens(&tokens),
        },
    ))
}

/// One count per horizon lexicon, then the detected dates in text order.
pub fn featurize_timing(
    text: &str,
    horizons: &[Lexicon; 4],
    detector: &dyn EntityDetector,
) -> Result<FeatureAnnotation> {
    require_text(text)?;
    let tokens = stem_tokens(text);
    let dates = detector
        .detect(text)
        .into_iter()
        .filter(|e| e.kind == EntityKind::Date)
        .map(|e| {
            // '.' and ';' delimit tags and dates.
            e.text
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ")
                .replace(['.', ';'], "")
        })
        .filter(|d| !d.is_empty())
        .collect();
    Ok(FeatureAnnotation::new(
        text,
        Features::Timing {
            horizon_terms: horizons.each_ref().map(|l| l.count_in_tokens(&tokens)),
            dates,
        },
    ))
}

/// Prepends the annotation's tag block to the record text.
pub fn enrich(record: &PromiseRecord, annotation: &FeatureAnnotation) -> Result<String> {
    if annotation.tag_text.is_empty() {
        return Err(Error::EmptyTagBlock);
    }
    if parse_tag_block(&record.raw_text).is_some() {
        return Err(Error::AlreadyEnriched);
    }
    if !annotation.describes(&record.raw_text) {
        return Err(Error::MismatchedAnnotation);
    }
    Ok(format!("{}{}", annotation.tag_text, record.raw_text))
}

/// Bundles lexicons, scorer and detector behind one call per subtask.
pub struct Featurizer {
    pub lexicons: LexiconSet,
    pub sentiment: Box<dyn SentimentScorer>,
    pub detector: Box<dyn EntityDetector>,
}

impl Default for Featurizer {
    fn default() -> Self {
        Self::new(LexiconSet::builtin())
    }
}

impl Featurizer {
    /// Uses the lexicon sentiment scorer and the regex detector.
    pub fn new(lexicons: LexiconSet) -> Self {
        let sentiment = LexiconSentiment {
            positive: lexicons.positive.clone(),
            negative: lexicons.negative.clone(),
        };
        Self {
            lexicons,
            sentiment: Box::new(sentiment),
            detector: Box::new(RegexDetector),
        }
    }

    pub fn annotate(&self, subtask: Subtask, text: &str) -> Result<FeatureAnnotation> {
        let l = &self.lexicons;
        match subtask {
            Subtask::Promise => featurize_promise(text, &l.promise_terms, self.sentiment.as_ref()),
            Subtask::Evidence => {
                featurize_evidence(text, &l.metric, &l.proof, self.detector.as_ref())
            }
            Subtask::Clarity => featurize_clarity(text, &l.vague, &l.specific),
            Subtask::Timing => featurize_timing(text, &l.horizons, self.detector.as_ref()),
        }
    }

    /// Annotates and enriches in one step.
    pub fn enrich_record(&self, subtask: Subtask, record: &PromiseRecord) -> Result<String> {
        let annotation = self.annotate(subtask, &record.raw_text)?;
        enrich(record, &annotation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enriched(subtask: Subtask, text: &str) -> String {
        Featurizer::default()
            .enrich_record(subtask, &PromiseRecord::new("t", text))
            .unwrap()
    }

    #[test]
    fn promise_golden_example() {
        let text = "We commit to achieving net-zero emissions across our entire supply chain by 2040";
        assert_eq!(
            enriched(Subtask::Promise, text),
            format!("POSITIVE Sentiment. Contains Promise Word. {text}")
        );
    }

    #[test]
    fn evidence_golden_example() {
        let text = "Our carbon emissions decreased by 15%, as stated in our sustainability report and confirmed through third-party audit";
        assert_eq!(
            enriched(Subtask::Evidence, text),
            format!("Proof_Count_2. Has_Numbers. {text}")
        );
    }

    #[test]
    fn clarity_golden_example() {
        let text = "We might consider implementing sustainability initiatives";
        assert_eq!(
            enriched(Subtask::Clarity, text),
            format!("Vague_Terms_2. Specific_Terms_0. {text}")
        );
    }

    #[test]
    fn pinned_negative_scorer_without_promise_words() {
        let l = LexiconSet::builtin();
        let a = featurize_promise(
            "The sky is blue",
            &l.promise_terms,
            &FixedSentiment(Polarity::Negative),
        )
        .unwrap();
        assert_eq!(a.tag_text, "NEGATIVE Sentiment. No Promise Word. ");
    }

    struct Broken;
    impl SentimentScorer for Broken {
        fn polarity(&self, _: &str) -> std::result::Result<Polarity, String> {
            Err("model not loaded".into())
        }
    }

    #[test]
    fn failing_scorer_falls_back_to_negative() {
        let l = LexiconSet::builtin();
        let a = featurize_promise("We pledge", &l.promise_terms, &Broken).unwrap();
        assert_eq!(a.tag_text, "NEGATIVE Sentiment. Contains Promise Word. ");
    }

    #[test]
    fn empty_text_is_rejected() {
        let f = Featurizer::default();
        for s in Subtask::ALL {
            assert!(f.annotate(s, "  ").is_err());
        }
    }

    #[test]
    fn evidence_zero_case_and_entities() {
        let f = Featurizer::default();
        assert_eq!(
            f.annotate(Subtask::Evidence, "Nothing to see here").unwrap().tag_text,
            "Proof_Count_0. "
        );
        // "dollars" and "million" are metric terms; "3" is a number; "2021" a date.
        assert_eq!(
            f.annotate(Subtask::Evidence, "We invested 3 million dollars in 2021")
                .unwrap()
                .tag_text,
            "Proof_Count_2. Has_Numbers. Has_Dates. "
        );
    }

    #[test]
    fn clarity_counts() {
        let f = Featurizer::default();
        assert_eq!(
            f.annotate(Subtask::Clarity, "might might might").unwrap().features,
            Features::Clarity {
                vague_terms: 3,
                specific_terms: 0
            }
        );
        assert_eq!(
            f.annotate(Subtask::Clarity, "The board met").unwrap().tag_text,
            "Vague_Terms_0. Specific_Terms_0. "
        );
    }

    #[test]
    fn timing_tags() {
        let f = Featurizer::default();
        assert_eq!(
            f.annotate(Subtask::Timing, "by 2040").unwrap().tag_text,
            "Within2_Terms_0. Mid_Terms_0. Long_Terms_1. Other_Terms_0. Dates_2040. "
        );
        assert_eq!(
            f.annotate(Subtask::Timing, "The board met").unwrap().tag_text,
            "Within2_Terms_0. Mid_Terms_0. Long_Terms_0. Other_Terms_0. "
        );
        let a = f.annotate(Subtask::Timing, "within two years").unwrap();
        match a.features {
            Features::Timing { horizon_terms, .. } => assert_eq!(horizon_terms[0], 1),
            _ => unreachable!(),
        }
    }

    #[test]
    fn enrich_guards() {
        let f = Featurizer::default();
        let rec = PromiseRecord::new("a", "We might consider it");
        let ann = f.annotate(Subtask::Clarity, &rec.raw_text).unwrap();
        assert_eq!(
            enrich(&rec, &ann).unwrap(),
            "Vague_Terms_2. Specific_Terms_0. We might consider it"
        );

        let other = PromiseRecord::new("b", "Different text");
        assert!(matches!(enrich(&other, &ann), Err(Error::MismatchedAnnotation)));

        let mut empty = ann.clone();
        empty.tag_text.clear();
        assert!(matches!(enrich(&rec, &empty), Err(Error::EmptyTagBlock)));

        let already = PromiseRecord::new("c", enrich(&rec, &ann).unwrap());
        let ann2 = f.annotate(Subtask::Clarity, &already.raw_text).unwrap();
        assert!(matches!(enrich(&already, &ann2), Err(Error::AlreadyEnriched)));
    }
}
