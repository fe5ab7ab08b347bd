use std::fmt;

use super::lexicon::{stem_tokens, Lexicon};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Positive => "POSITIVE",
            Polarity::Negative => "NEGATIVE",
        })
    }
}

/// Pluggable sentence polarity model.
pub trait SentimentScorer: Send + Sync {
    fn polarity(&self, text: &str) -> Result<Polarity, String>;
}

/// Signed-lexicon vote; ties, including no cues at all, are positive.
#[derive(Clone, Debug)]
pub struct LexiconSentiment {
    pub positive: Lexicon,
    pub negative: Lexicon,
}

impl SentimentScorer for LexiconSentiment {
    fn polarity(&self, text: &str) -> Result<Polarity, String> {
        let tokens = stem_tokens(text);
        let pos = self.positive.count_in_tokens(&tokens);
        let neg = self.negative.count_in_tokens(&tokens);
        Ok(if pos >= neg {
            Polarity::Positive
        } else {
            Polarity::Negative
        })
    }
}

/// Always answers the same polarity.
#[derive(Clone, Copy, Debug)]
pub struct FixedSentiment(pub Polarity);

impl SentimentScorer for FixedSentiment {
    fn polarity(&self, _text: &str) -> Result<Polarity, String> {
        Ok(self.0)
    }
}
