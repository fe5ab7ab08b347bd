//! Term lists and stemmed token/phrase matching.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use once_cell::sync::Lazy;
use regex::Regex;
use rust_stemmers::{Algorithm, Stemmer};

use crate::error::{Error, Result};

/// Version tag of the lexicons compiled into the crate.
pub const LEXICON_VERSION: &str = "v1";

/// Year that relative year placeholders are resolved against.
pub const DEFAULT_REFERENCE_YEAR: i32 = 2024;

static STEMMER: Lazy<Stemmer> = Lazy::new(|| Stemmer::create(Algorithm::English));
static WORD: Lazy<Regex> = Lazy::new(|| Regex::new(r"[\p{L}\p{N}]+").unwrap());
static YEAR_TOKEN: Lazy<Regex> = Lazy::new(|| Regex::new(r"^(19|20)\d{2}$").unwrap());

/// Lowercased, stemmed word tokens of `text`.
pub fn stem_tokens(text: &str) -> Vec<String> {
    WORD.find_iter(text)
        .map(|m| STEMMER.stem(&m.as_str().to_lowercase()).into_owned())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchMode {
    /// Every entry is one word; a token matches when its stem equals the entry's stem.
    StemmedToken,
    /// Entries are word sequences matched on consecutive stemmed tokens.
    Phrase,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum YearBand {
    Any,
    /// At most 2 years after the reference year.
    Near,
    /// 3 to 5 years after.
    Mid,
    /// More than 5 years after.
    Far,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum PatternToken {
    Stem(String),
    Year(YearBand),
}

impl PatternToken {
    fn matches(&self, token: &str, reference_year: i32) -> bool {
        match self {
            PatternToken::Stem(s) => s == token,
            PatternToken::Year(band) => {
                if !YEAR_TOKEN.is_match(token) {
                    return false;
                }
                let ahead = token.parse::<i32>().unwrap() - reference_year;
                match band {
                    YearBand::Any => true,
                    YearBand::Near => ahead <= 2,
                    YearBand::Mid => (3..=5).contains(&ahead),
                    YearBand::Far => ahead > 5,
                }
            }
        }
    }
}

/// A named term list.
#[derive(Clone, Debug)]
pub struct Lexicon {
    name: String,
    entries: Vec<String>,
    match_mode: MatchMode,
    reference_year: i32,
    patterns: Vec<Vec<PatternToken>>,
}

impl Lexicon {
    /// Builds a lexicon from entries. Entries must be unique, non-empty and
    /// lowercase.
    pub fn new<S: AsRef<str>>(
        name: impl Into<String>,
        entries: impl IntoIterator<Item = S>,
        match_mode: MatchMode,
    ) -> Result<Self> {
        let name = name.into();
        let mut seen = HashSet::new();
        let mut list = Vec::new();
        let mut patterns = Vec::new();
        for (i, raw) in entries.into_iter().enumerate() {
            let entry = raw.as_ref().trim().to_string();
            let err = |message: String| Error::Lexicon {
                name: name.clone(),
                line: i + 1,
                message,
            };
            if entry.is_empty() {
                return Err(err("empty entry".into()));
            }
            if entry != entry.to_lowercase() {
                return Err(err(format!("entry `{entry}` is not lowercase")));
            }
            if !seen.insert(entry.clone()) {
                return Err(err(format!("duplicate entry `{entry}`")));
            }
            let pattern = compile(&entry).map_err(err)?;
            if match_mode == MatchMode::StemmedToken && pattern.len() != 1 {
                return Err(err(format!("`{entry}` is not a single token")));
            }
            if !patterns.contains(&pattern) {
                patterns.push(pattern);
            }
            list.push(entry);
        }
        Ok(Self {
            name,
            entries: list,
            match_mode,
            reference_year: DEFAULT_REFERENCE_YEAR,
            patterns,
        })
    }

    /// Parses the file format: one term per line, `#` comments, and an
    /// optional `# mode: phrase` directive.
    pub fn parse(name: impl Into<String>, source: &str) -> Result<Self> {
        let name = name.into();
        let mut mode = MatchMode::StemmedToken;
        let mut entries = Vec::new();
        for line in source.lines() {
            let line = line.trim();
            if let Some(comment) = line.strip_prefix('#') {
                if comment.trim().eq_ignore_ascii_case("mode: phrase") {
                    mode = MatchMode::Phrase;
                }
                continue;
            }
            if !line.is_empty() {
                entries.push(line);
            }
        }
        Self::new(name, entries, mode)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("lexicon")
            .to_string();
        Self::parse(name, &source)
    }

    pub fn with_reference_year(mut self, year: i32) -> Self {
        self.reference_year = year;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn match_mode(&self) -> MatchMode {
        self.match_mode
    }

    /// Number of matches in already stemmed tokens, with multiplicity.
    pub fn count_in_tokens(&self, tokens: &[String]) -> usize {
        let mut count = 0;
        for start in 0..tokens.len() {
            for p in &self.patterns {
                if start + p.len() <= tokens.len()
                    && p.iter()
                        .zip(&tokens[start..])
                        .all(|(pt, tok)| pt.matches(tok, self.reference_year))
                {
                    count += 1;
                }
            }
        }
        count
    }

    pub fn count(&self, text: &str) -> usize {
        self.count_in_tokens(&stem_tokens(text))
    }
}

fn compile(entry: &str) -> std::result::Result<Vec<PatternToken>, String> {
    let mut out = Vec::new();
    for word in entry.split_whitespace() {
        if let Some(inner) = word.strip_prefix('<').and_then(|w| w.strip_suffix('>')) {
            let band = match inner {
                "year" => YearBand::Any,
                "year:near" => YearBand::Near,
                "year:mid" => YearBand::Mid,
                "year:far" => YearBand::Far,
                other => return Err(format!("unknown placeholder `<{other}>`")),
            };
            out.push(PatternToken::Year(band));
        } else {
            let stems = stem_tokens(word);
            if stems.is_empty() {
                return Err(format!("`{word}` has no word characters"));
            }
            out.extend(stems.into_iter().map(PatternToken::Stem));
        }
    }
    Ok(out)
}

macro_rules! builtin {
    ($dir:literal, $name:literal) => {
        Lexicon::parse(
            $name,
            include_str!(concat!("../../lexicons/", $dir, "/", $name, ".txt")),
        )
        .expect(concat!("built-in lexicon ", $dir, "/", $name))
    };
}

/// Every lexicon the four featurizers use.
#[derive(Clone, Debug)]
pub struct LexiconSet {
    pub promise_terms: Lexicon,
    pub positive: Lexicon,
    pub negative: Lexicon,
    pub metric: Lexicon,
    pub proof: Lexicon,
    pub vague: Lexicon,
    pub specific: Lexicon,
    /// Within 2 years, 2 to 5 years, beyond 5 years, other.
    pub horizons: [Lexicon; 4],
}

impl LexiconSet {
    /// Lexicons shipped with the crate, version [`LEXICON_VERSION`].
    pub fn builtin() -> Self {
        Self {
            promise_terms: builtin!("promise", "promise_terms"),
            positive: builtin!("promise", "positive"),
            negative: builtin!("promise", "negative"),
            metric: builtin!("evidence", "metric"),
            proof: builtin!("evidence", "proof"),
            vague: builtin!("clarity", "vague"),
            specific: builtin!("clarity", "specific"),
            horizons: [
                builtin!("timing", "within2"),
                builtin!("timing", "mid"),
                builtin!("timing", "long"),
                builtin!("timing", "other"),
            ],
        }
    }

    /// Loads `<dir>/<subtask>/<name>.txt` for every lexicon.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let load = |sub: &str, name: &str| Lexicon::load(dir.join(sub).join(format!("{name}.txt")));
        Ok(Self {
            promise_terms: load("promise", "promise_terms")?,
            positive: load("promise", "positive")?,
            negative: load("promise", "negative")?,
            metric: load("evidence", "metric")?,
            proof: load("evidence", "proof")?,
            vague: load("clarity", "vague")?,
            specific: load("clarity", "specific")?,
            horizons: [
                load("timing", "within2")?,
                load("timing", "mid")?,
                load("timing", "long")?,
                load("timing", "other")?,
            ],
        })
    }

    pub fn with_reference_year(mut self, year: i32) -> Self {
        self.horizons = self.horizons.map(|l| l.with_reference_year(year));
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems_inflections() {
        assert_eq!(stem_tokens("Pledged commitments, Audited!"), ["pledg", "commit", "audit"]);
    }

    #[test]
    fn counts_with_multiplicity() {
        let lex = Lexicon::new("v", ["might"], MatchMode::StemmedToken).unwrap();
        assert_eq!(lex.count("might might might"), 3);
        assert_eq!(lex.count("mighty"), 0);
    }

    #[test]
    fn phrase_matching_and_year_bands() {
        let set = LexiconSet::builtin();
        assert_eq!(set.horizons[0].count("within two years"), 1);
        assert_eq!(set.horizons[2].count("net zero by 2040"), 1);
        assert_eq!(set.horizons[1].count("net zero by 2040"), 0);
        assert_eq!(set.horizons[1].count("by 2028"), 1);
        assert_eq!(set.horizons[0].count("by 2025"), 1);
        let shifted = set.with_reference_year(2036);
        assert_eq!(shifted.horizons[0].count("by 2037"), 1);
    }

    #[test]
    fn rejects_invalid_entries() {
        assert!(Lexicon::new("x", ["Commit"], MatchMode::StemmedToken).is_err());
        assert!(Lexicon::new("x", ["a", "a"], MatchMode::StemmedToken).is_err());
        assert!(Lexicon::new("x", [""], MatchMode::StemmedToken).is_err());
        assert!(Lexicon::new("x", ["two words"], MatchMode::StemmedToken).is_err());
        assert!(Lexicon::new("x", ["by <decade>"], MatchMode::Phrase).is_err());
        match Lexicon::parse("y", "# c\nok\nBad\n") {
            Err(Error::Lexicon { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn builtin_lexicons_load() {
        let set = LexiconSet::builtin();
        assert!(set.promise_terms.entries().iter().any(|e| e == "commit"));
        assert!(set.vague.entries().iter().any(|e| e == "consider"));
        assert_eq!(set.horizons[3].match_mode(), MatchMode::Phrase);
    }
}
