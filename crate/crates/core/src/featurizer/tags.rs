//! The tag-block grammar: render feature values to a prefix and parse a
//! prefix back into values.

use once_cell::sync::Lazy;
use regex::Regex;

use super::sentiment::Polarity;
use crate::corpus::Subtask;

/// Feature values behind one tag block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Features {
    Promise {
        sentiment: Polarity,
        has_promise_word: bool,
    },
    Evidence {
        proof_count: usize,
        has_numbers: bool,
        has_dates: bool,
    },
    Clarity {
        vague_terms: usize,
        specific_terms: usize,
    },
    Timing {
        /// Counts for within 2 years, 2 to 5 years, beyond 5 years, other.
        horizon_terms: [usize; 4],
        dates: Vec<String>,
    },
}

const HORIZON_TAGS: [&str; 4] = ["Within2_Terms", "Mid_Terms", "Long_Terms", "Other_Terms"];

impl Features {
    pub fn subtask(&self) -> Subtask {
        match self {
            Features::Promise { .. } => Subtask::Promise,
            Features::Evidence { .. } => Subtask::Evidence,
            Features::Clarity { .. } => Subtask::Clarity,
            Features::Timing { .. } => Subtask::Timing,
        }
    }

    /// Tags in canonical order, without the trailing ". ".
    pub fn tags(&self) -> Vec<String> {
        match self {
            Features::Promise {
                sentiment,
                has_promise_word,
            } => vec![
                format!("{sentiment} Sentiment"),
                if *has_promise_word {
                    "Contains Promise Word".into()
                } else {
                    "No Promise Word".into()
                },
            ],
            Features::Evidence {
                proof_count,
                has_numbers,
                has_dates,
            } => {
                let mut tags = vec![format!("Proof_Count_{proof_count}")];
                if *has_numbers {
                    tags.push("Has_Numbers".into());
                }
                if *has_dates {
                    tags.push("Has_Dates".into());
                }
                tags
            }
            Features::Clarity {
                vague_terms,
                specific_terms,
            } => vec![
                format!("Vague_Terms_{vague_terms}"),
                format!("Specific_Terms_{specific_terms}"),
            ],
            Features::Timing {
                horizon_terms,
                dates,
            } => {
                let mut tags: Vec<String> = HORIZON_TAGS
                    .iter()
                    .zip(horizon_terms)
                    .map(|(t, n)| format!("{t}_{n}"))
                    .collect();
                if !dates.is_empty() {
                    tags.push(format!("Dates_{}", dates.join(";")));
                }
                tags
            }
        }
    }

    /// The prefix block: every tag followed by ". ".
    pub fn render(&self) -> String {
        self.tags().iter().map(|t| format!("{t}. ")).collect()
    }
}

static PROMISE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"^(POSITIVE|NEGATIVE) Sentiment\. (Contains Promise Word|No Promise Word)\. ")
        .unwrap()
});
static EVIDENCE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^Proof_Count_(\d+)\. (Has_Numbers\. )?(Has_Dates\. )?").unwrap());
static CLARITY: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^Vague_Terms_(\d+)\. Specific_Terms_(\d+)\. ").unwrap());
static TIMING: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"^Within2_Terms_(\d+)\. Mid_Terms_(\d+)\. Long_Terms_(\d+)\. Other_Terms_(\d+)\. (?:Dates_([^.;]+(?:;[^.;]+)*)\. )?",
    )
    .unwrap()
});

fn num(caps: &regex::Captures<'_>, i: usize) -> Option<usize> {
    caps.get(i)?.as_str().parse().ok()
}

/// Recognizes a tag block at the start of `text`. Returns the features and
/// the byte length of the block.
pub fn parse_tag_block(text: &str) -> Option<(Features, usize)> {
    if let Some(c) = PROMISE.captures(text) {
        let sentiment = if &c[1] == "POSITIVE" {
            Polarity::Positive
        } else {
            Polarity::Negative
        };
        let f = Features::Promise {
            sentiment,
            has_promise_word: &c[2] == "Contains Promise Word",
        };
        return Some((f, c[0].len()));
    }
    if let Some(c) = EVIDENCE.captures(text) {
        let f = Features::Evidence {
            proof_count: num(&c, 1)?,
            has_numbers: c.get(2).is_some(),
            has_dates: c.get(3).is_some(),
        };
        return Some((f, c[0].len()));
    }
    if let Some(c) = CLARITY.captures(text) {
        let f = Features::Clarity {
            vague_terms: num(&c, 1)?,
            specific_terms: num(&c, 2)?,
        };
        return Some((f, c[0].len()));
    }
    if let Some(c) = TIMING.captures(text) {
        let f = Features::Timing {
            horizon_terms: [num(&c, 1)?, num(&c, 2)?, num(&c, 3)?, num(&c, 4)?],
            dates: c
                .get(5)
                .map(|m| m.as_str().split(';').map(str::to_string).collect())
                .unwrap_or_default(),
        };
        return Some((f, c[0].len()));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_in_canonical_order() {
        let f = Features::Evidence {
            proof_count: 2,
            has_numbers: true,
            has_dates: false,
        };
        assert_eq!(f.render(), "Proof_Count_2. Has_Numbers. ");
        let f = Features::Timing {
            horizon_terms: [0, 0, 1, 0],
            dates: vec!["2040".into(), "March 2030".into()],
        };
        assert_eq!(
            f.render(),
            "Within2_Terms_0. Mid_Terms_0. Long_Terms_1. Other_Terms_0. Dates_2040;March 2030. "
        );
    }

    #[test]
    fn parses_own_output() {
        let f = Features::Timing {
            horizon_terms: [1, 2, 3, 4],
            dates: vec!["within two years".into()],
        };
        let text = format!("{}body", f.render());
        assert_eq!(parse_tag_block(&text), Some((f.clone(), f.render().len())));
        assert_eq!(parse_tag_block("plain text"), None);
        assert_eq!(parse_tag_block("Proof_Count_x. text"), None);
    }
}
