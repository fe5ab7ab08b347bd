//! Whitespace and punctuation pre-tokenization followed by greedy
//! longest-match word pieces over a corpus-built vocabulary.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use once_cell::sync::Lazy;
use regex::Regex;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;
const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];
const CONTINUATION: &str = "##";

static PRE_TOKEN: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"[\p{L}\p{N}_]+|[^\s\p{L}\p{N}_]").unwrap());

/// Lowercased words and single punctuation marks.
pub fn pre_tokenize(text: &str) -> Vec<String> {
    PRE_TOKEN
        .find_iter(text)
        .map(|m| m.as_str().to_lowercase())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Special tokens, then every character seen (alone and as a
    /// continuation piece), then words with at least `min_freq` occurrences.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_freq: usize) -> Self {
        let mut freq: BTreeMap<String, usize> = BTreeMap::new();
        let mut chars = BTreeSet::new();
        for text in texts {
            for word in pre_tokenize(text) {
                chars.extend(word.chars());
                *freq.entry(word).or_default() += 1;
            }
        }
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(chars.iter().map(|c| c.to_string()));
        tokens.extend(chars.iter().map(|c| format!("{CONTINUATION}{c}")));
        let mut words: Vec<(String, usize)> = freq
            .into_iter()
            .filter(|(w, n)| *n >= min_freq.max(1) && w.chars().count() > 1)
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        tokens.extend(words.into_iter().map(|(w, _)| w));
        Self::from_tokens(tokens).expect("built vocabulary is valid")
    }

    /// Rebuilds a vocabulary from its token list (as stored in checkpoints).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Checkpoint(
                "vocabulary must start with [PAD] [UNK] [CLS] [SEP]".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Checkpoint(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Greedy longest-match pieces of one pre-token; `[UNK]` if some suffix
    /// cannot be covered.
    pub fn word_pieces(&self, word: &str) -> Vec<usize> {
        if let Some(id) = self.id(word) {
            return vec![id];
        }
        let chars: Vec<char> = word.chars().collect();
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while end > start {
                let body: String = chars[start..end].iter().collect();
                let candidate = if start == 0 {
                    body
                } else {
                    format!("{CONTINUATION}{body}")
                };
                if let Some(id) = self.id(&candidate) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => return vec![UNK],
            }
        }
        pieces
    }
}

/// Token ids with `[CLS]`/`[SEP]` markers and the attention mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tokenized {
    pub token_ids: Vec<usize>,
    pub attention_mask: Vec<bool>,
}

impl Tokenized {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Right-pads with `[PAD]` positions that are masked out.
    pub fn padded(mut self, len: usize) -> Self {
        while self.token_ids.len() < len {
            self.token_ids.push(PAD);
            self.attention_mask.push(false);
        }
        self
    }
}

/// Tokenizes and right-truncates to `max_len` (markers included), so the
/// beginning of the text, where tags and metadata live, is kept.
pub fn tokenize(text: &str, vocab: &Vocab, max_len: usize) -> Tokenized {
    assert!(max_len >= 2, "max_len must leave room for the markers");
    let mut ids = vec![CLS];
    'outer: for word in pre_tokenize(text) {
        for piece in vocab.word_pieces(&word) {
            if ids.len() == max_len - 1 {
                break 'outer;
            }
            ids.push(piece);
        }
    }
    ids.push(SEP);
    let n = ids.len();
    Tokenized {
        token_ids: ids,
        attention_mask: vec![true; n],
    }
}
