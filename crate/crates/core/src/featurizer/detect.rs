//! Number and date detection.
//!
//! [`RegexDetector`] is the deterministic reference implementation. A
//! statistical NER can replace it through [`EntityDetector`].

use once_cell::sync::Lazy;
use regex::Regex;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntityKind {
    Number,
    Date,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entity {
    pub kind: EntityKind,
    pub text: String,
    pub start: usize,
    pub end: usize,
}

pub trait EntityDetector: Send + Sync {
    /// Non-overlapping entities sorted by start offset.
    fn detect(&self, text: &str) -> Vec<Entity>;
}

const MONTHS: &str = "January|February|March|April|June|July|August|September|October|November|December";
const DAY: &str = r"\d{1,2}(?:st|nd|rd|th)?";
const YEAR: &str = r"(?:19|20)\d{2}";

static DATE_PATTERNS: Lazy<Vec<Regex>> = Lazy::new(|| {
    let spelled = "one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve|eighteen|twenty";
    vec![
        Regex::new(&format!(r"\b{YEAR}-\d{{2}}-\d{{2}}\b")).unwrap(),
        Regex::new(&format!(r"\b\d{{1,2}}/\d{{1,2}}/{YEAR}\b")).unwrap(),
        // "May" only counts with a day or year to avoid the modal verb.
        Regex::new(&format!(
            r"\b(?:(?:{MONTHS})(?:\s+{DAY})?(?:,?\s+{YEAR})?|May(?:\s+{DAY}(?:,?\s+{YEAR})?|,?\s+{YEAR}))\b"
        ))
        .unwrap(),
        Regex::new(&format!(r"(?i)\bwithin\s+(?:\d+|{spelled})\s+(?:years?|months?)\b")).unwrap(),
        Regex::new(&format!(r"\b{YEAR}\b")).unwrap(),
    ]
});

static NUMBER_PATTERNS: Lazy<Vec<Regex>> = Lazy::new(|| {
    vec![
        Regex::new(r"[$€£]\s?\d[\d,]*(?:\.\d+)?(?:\s*(?:million|billion|thousand|[MBK])\b)?").unwrap(),
        Regex::new(r"\b\d+(?:\.\d+)?\s?(?:%|percent\b)").unwrap(),
        Regex::new(r"\b\d[\d,]*(?:\.\d+)?\b").unwrap(),
    ]
});

/// Regex detector: dates are ISO and slash dates, month names with an
/// optional day and year, "within N years/months" spans and 4-digit years
/// 1900-2099; numbers are currency amounts, percentages and digit groups
/// outside date spans.
#[derive(Clone, Copy, Debug, Default)]
pub struct RegexDetector;

fn overlaps(found: &[Entity], start: usize, end: usize) -> bool {
    found.iter().any(|e| start < e.end && e.start < end)
}

impl EntityDetector for RegexDetector {
    fn detect(&self, text: &str) -> Vec<Entity> {
        let mut found: Vec<Entity> = Vec::new();
        let passes = DATE_PATTERNS
            .iter()
            .map(|p| (p, EntityKind::Date))
            .chain(NUMBER_PATTERNS.iter().map(|p| (p, EntityKind::Number)));
        for (pattern, kind) in passes {
            for m in pattern.find_iter(text) {
                if !overlaps(&found, m.start(), m.end()) {
                    found.push(Entity {
                        kind,
                        text: m.as_str().to_string(),
                        start: m.start(),
                        end: m.end(),
                    });
                }
            }
        }
        found.sort_by_key(|e| e.start);
        found
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<(EntityKind, String)> {
        RegexDetector
            .detect(text)
            .into_iter()
            .map(|e| (e.kind, e.text))
            .collect()
    }

    #[test]
    fn percent_is_a_number() {
        assert_eq!(
            kinds("emissions decreased by 15%, as stated"),
            vec![(EntityKind::Number, "15%".to_string())]
        );
    }

    #[test]
    fn years_are_dates_not_numbers() {
        assert_eq!(
            kinds("We invested 3 million dollars in 2021"),
            vec![
                (EntityKind::Number, "3".to_string()),
                (EntityKind::Date, "2021".to_string())
            ]
        );
    }

    #[test]
    fn month_dates_and_relative_spans() {
        assert_eq!(
            kinds("By March 2026 and within two years"),
            vec![
                (EntityKind::Date, "March 2026".to_string()),
                (EntityKind::Date, "within two years".to_string())
            ]
        );
        assert!(kinds("We may consider it").is_empty());
        assert_eq!(kinds("on May 5, 2025")[0].1, "May 5, 2025");
    }

    #[test]
    fn currency_and_chemical_names() {
        assert_eq!(kinds("$2.5 million invested")[0].1, "$2.5 million");
        assert!(kinds("CO2 and PM10 levels").is_empty());
    }
}
