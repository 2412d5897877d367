//! Raw text to tokens, plus the word list used for dictionary lookup.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Token;
use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_ru.txt");
pub const DEFAULT_VOWELS: &str = "аеёиоуыэюяaeiouy";

/// Lowercase word list.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dictionary {
    entries: BTreeSet<String>,
}

impl Dictionary {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let entries = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty() && !w.chars().any(char::is_whitespace))
            .collect();
        Dictionary { entries }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(String::as_str)
    }
}

/// One word per line, UTF-8. Entries are lowercased and deduplicated.
pub fn load_dictionary(path: impl AsRef<Path>) -> Result<Dictionary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(Dictionary::from_words(text.lines()))
}

pub fn in_dictionary(dict: &Dictionary, token: &Token) -> bool {
    dict.contains(&token.text)
}

/// Same format as the dictionary file.
pub fn load_word_list(path: impl AsRef<Path>) -> Result<BTreeSet<String>> {
    Ok(load_dictionary(path)?.entries)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub stopwords: BTreeSet<String>,
    pub vowels: BTreeSet<char>,
    /// Treat a dot followed by whitespace or end of text as a separator and sentence end.
    pub split_on_dots: bool,
    /// Characters that separate tokens like whitespace does, without ending a sentence.
    pub extra_separators: BTreeSet<char>,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            stopwords: Dictionary::from_words(DEFAULT_STOPWORDS.lines()).entries,
            vowels: DEFAULT_VOWELS.chars().collect(),
            split_on_dots: true,
            extra_separators: ",;:!?\"«»".chars().collect(),
        }
    }
}

impl TokenizerConfig {
    /// Default vowels and separators, no stopwords.
    pub fn without_stopwords() -> Self {
        TokenizerConfig {
            stopwords: BTreeSet::new(),
            ..Default::default()
        }
    }

    pub fn with_stopwords(mut self, stopwords: BTreeSet<String>) -> Self {
        self.stopwords = stopwords;
        self
    }

    pub fn is_vowel(&self, c: char) -> bool {
        c.to_lowercase().all(|l| self.vowels.contains(&l))
    }

    pub fn validate(&self) -> Result<()> {
        if self.vowels.is_empty() {
            return Err(Error::Config("vowel set must not be empty".into()));
        }
        Ok(())
    }
}

struct TokenSink<'a> {
    cfg: &'a TokenizerConfig,
    out: Vec<Token>,
    buf: String,
    buf_depth: u32,
    sent: u32,
    sent_has_tokens: bool,
}

impl TokenSink<'_> {
    fn push_char(&mut self, c: char, depth: u32) {
        if self.buf.is_empty() {
            self.buf_depth = depth;
        }
        self.buf.push(c);
    }

    fn flush(&mut self) {
        if self.buf.is_empty() {
            return;
        }
        let text = std::mem::take(&mut self.buf);
        if self.cfg.stopwords.contains(&text.to_lowercase()) {
            return;
        }
        self.out.push(Token {
            text,
            paren_depth: self.buf_depth,
            sent_id: self.sent,
            is_abbrev: false,
        });
        self.sent_has_tokens = true;
    }

    fn end_sentence(&mut self) {
        self.flush();
        // Sentences that lose every token to stopword removal are not counted.
        if self.sent_has_tokens {
            self.sent += 1;
            self.sent_has_tokens = false;
        }
    }
}

/// Splits raw text into tokens.
///
/// Whitespace separates tokens. A dot ends a sentence only when followed by
/// whitespace or end of text, so "т.д" stays one token. Round parentheses are
/// dropped from token text and tracked through `paren_depth`; an unmatched
/// `)` leaves the depth at zero.
pub fn tokenize(raw: &str, cfg: &TokenizerConfig) -> Vec<Token> {
    let mut sink = TokenSink {
        cfg,
        out: Vec::new(),
        buf: String::new(),
        buf_depth: 0,
        sent: 0,
        sent_has_tokens: false,
    };
    let mut depth: u32 = 0;
    let mut chars = raw.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            c if c.is_whitespace() || cfg.extra_separators.contains(&c) => sink.flush(),
            '(' => {
                sink.flush();
                depth += 1;
            }
            ')' => {
                sink.flush();
                depth = depth.saturating_sub(1);
            }
            '.' if cfg.split_on_dots
                && chars.peek().map_or(true, |n| n.is_whitespace()) =>
            {
                sink.end_sentence()
            }
            c => sink.push_char(c, depth),
        }
    }
    sink.flush();
    sink.out
}
