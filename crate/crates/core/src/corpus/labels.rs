//! Label taxonomy for the four promise-verification subtasks.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Lowercases, trims and drops spaces, underscores and hyphens so that
/// "Not Clear", "not_clear" and "NotClear" compare equal.
pub fn canonical_key(raw: &str) -> String {
    raw.trim()
        .chars()
        .filter(|c| !c.is_whitespace() && *c != '_' && *c != '-')
        .flat_map(char::to_lowercase)
        .collect()
}

/// A closed label vocabulary with a stable class index.
pub trait LabelClass: Copy + Eq + fmt::Debug + 'static {
    const ALL: &'static [Self];

    /// Name written to submissions and record files.
    fn name(self) -> &'static str;

    /// Spellings accepted on input, already in `canonical_key` form.
    fn aliases(self) -> &'static [&'static str];

    fn index(self) -> usize {
        Self::ALL.iter().position(|c| *c == self).unwrap()
    }

    fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    fn parse(raw: &str) -> Option<Self> {
        let key = canonical_key(raw);
        Self::ALL
            .iter()
            .copied()
            .find(|c| canonical_key(c.name()) == key || c.aliases().contains(&key.as_str()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Binary {
    No,
    Yes,
}

impl LabelClass for Binary {
    const ALL: &'static [Self] = &[Binary::No, Binary::Yes];

    fn name(self) -> &'static str {
        match self {
            Binary::No => "No",
            Binary::Yes => "Yes",
        }
    }

    fn aliases(self) -> &'static [&'static str] {
        match self {
            Binary::No => &["false", "0", "n"],
            Binary::Yes => &["true", "1", "y"],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Clarity {
    Clear,
    NotClear,
    Misleading,
}

impl LabelClass for Clarity {
    const ALL: &'static [Self] = &[Clarity::Clear, Clarity::NotClear, Clarity::Misleading];

    fn name(self) -> &'static str {
        match self {
            Clarity::Clear => "Clear",
            Clarity::NotClear => "Not Clear",
            Clarity::Misleading => "Misleading",
        }
    }

    fn aliases(self) -> &'static [&'static str] {
        match self {
            Clarity::Clear => &[],
            Clarity::NotClear => &["unclear"],
            Clarity::Misleading => &[],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Timing {
    Within2Years,
    TwoToFiveYears,
    BeyondFiveYears,
    Other,
}

impl LabelClass for Timing {
    const ALL: &'static [Self] = &[
        Timing::Within2Years,
        Timing::TwoToFiveYears,
        Timing::BeyondFiveYears,
        Timing::Other,
    ];

    fn name(self) -> &'static str {
        match self {
            Timing::Within2Years => "within_2_years",
            Timing::TwoToFiveYears => "between_2_and_5_years",
            Timing::BeyondFiveYears => "more_than_5_years",
            Timing::Other => "other",
        }
    }

    fn aliases(self) -> &'static [&'static str] {
        match self {
            Timing::Within2Years => &["within2", "lessthan2years", "<2years"],
            Timing::TwoToFiveYears => &["2to5years", "25years", "twotofiveyears", "2~5years"],
            Timing::BeyondFiveYears => &[
                "beyond5years",
                "longerthan5years",
                "over5years",
                ">5years",
            ],
            Timing::Other => &["n/a", "na", "none"],
        }
    }
}

/// Gold labels of one record. Only `promise_status` is unconditional.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub promise_status: Binary,
    pub evidence_status: Option<Binary>,
    pub clarity: Option<Clarity>,
    pub timing: Option<Timing>,
}

impl LabelSet {
    /// Name of the first dependent label set while the promise label is No.
    pub fn dependency_violation(&self) -> Option<&'static str> {
        if self.promise_status == Binary::Yes {
            return None;
        }
        if self.evidence_status.is_some() {
            Some("evidence_status")
        } else if self.clarity.is_some() {
            Some("evidence_quality")
        } else if self.timing.is_some() {
            Some("verification_timeline")
        } else {
            None
        }
    }

    pub fn class_of(&self, subtask: Subtask) -> Option<usize> {
        match subtask {
            Subtask::Promise => Some(self.promise_status.index()),
            Subtask::Evidence => self.evidence_status.map(LabelClass::index),
            Subtask::Clarity => self.clarity.map(LabelClass::index),
            Subtask::Timing => self.timing.map(LabelClass::index),
        }
    }
}

/// The four subtasks, numbered 1 to 4 on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subtask {
    Promise,
    Evidence,
    Clarity,
    Timing,
}

impl Subtask {
    pub const ALL: [Subtask; 4] = [
        Subtask::Promise,
        Subtask::Evidence,
        Subtask::Clarity,
        Subtask::Timing,
    ];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<Self> {
        n.checked_sub(1).and_then(|i| Self::ALL.get(i as usize).copied())
    }

    pub fn n_classes(self) -> usize {
        self.class_names().len()
    }

    pub fn class_names(self) -> Vec<&'static str> {
        fn names<L: LabelClass>() -> Vec<&'static str> {
            L::ALL.iter().map(|c| c.name()).collect()
        }
        match self {
            Subtask::Promise | Subtask::Evidence => names::<Binary>(),
            Subtask::Clarity => names::<Clarity>(),
            Subtask::Timing => names::<Timing>(),
        }
    }

    /// Parses a label string of this subtask into its class index.
    pub fn parse_class(self, raw: &str) -> Option<usize> {
        match self {
            Subtask::Promise | Subtask::Evidence => Binary::parse(raw).map(LabelClass::index),
            Subtask::Clarity => Clarity::parse(raw).map(LabelClass::index),
            Subtask::Timing => Timing::parse(raw).map(LabelClass::index),
        }
    }

    pub fn is_binary(self) -> bool {
        self.n_classes() == 2
    }

    /// Field name used in record files and submissions.
    pub fn field(self) -> &'static str {
        match self {
            Subtask::Promise => "promise_status",
            Subtask::Evidence => "evidence_status",
            Subtask::Clarity => "evidence_quality",
            Subtask::Timing => "verification_timeline",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Subtask::Promise => "promise",
            Subtask::Evidence => "evidence",
            Subtask::Clarity => "clarity",
            Subtask::Timing => "timing",
        }
    }
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "subtask {} ({})", self.number(), self.key())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalizes_case_and_spacing() {
        assert_eq!(Clarity::parse("Not Clear"), Some(Clarity::NotClear));
        assert_eq!(Clarity::parse(" not_clear "), Some(Clarity::NotClear));
        assert_eq!(Clarity::parse("NOTCLEAR"), Some(Clarity::NotClear));
        assert_eq!(Binary::parse("yes"), Some(Binary::Yes));
        assert_eq!(Timing::parse("2-5 years"), Some(Timing::TwoToFiveYears));
        assert_eq!(Timing::parse("within_2_years"), Some(Timing::Within2Years));
        assert_eq!(Timing::parse("more than 5 years"), Some(Timing::BeyondFiveYears));
        assert_eq!(Clarity::parse("maybe"), None);
    }

    #[test]
    fn names_round_trip() {
        for c in Timing::ALL {
            assert_eq!(Timing::parse(c.name()), Some(*c));
        }
        for c in Clarity::ALL {
            assert_eq!(Clarity::parse(c.name()), Some(*c));
        }
    }

    #[test]
    fn subtask_numbering() {
        assert_eq!(Subtask::from_number(1), Some(Subtask::Promise));
        assert_eq!(Subtask::from_number(4), Some(Subtask::Timing));
        assert_eq!(Subtask::from_number(0), None);
        assert_eq!(Subtask::from_number(5), None);
        assert_eq!(Subtask::Timing.n_classes(), 4);
    }
}
