//! Candidate definitions for an abbreviation occurrence.
//!
//! For an abbreviation of `len` characters a definition has at most
//! `len_max = min(len + 5, 2 * len)` tokens, and is searched only within
//! `delta = min(len_max + 5, 2 * len_max)` tokens on either side. Each span
//! in those windows is kept when it passes four character rules:
//!
//! 1. the abbreviation's first character occurs in the first span token;
//! 2. at least `char_coverage_min` of the abbreviation's characters (counted
//!    with multiplicity) occur in the span;
//! 3. at most `max_missing_chars` of them do not;
//! 4. the abbreviation is not a substring of the span.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Token};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CandidateDefinition {
    pub abbrev_index: usize,
    pub start: usize,
    /// Inclusive.
    pub end: usize,
    pub side: Side,
}

impl CandidateDefinition {
    pub fn token_count(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn span(&self) -> (usize, usize) {
        (self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidateRuleConfig {
    pub char_coverage_min: f64,
    pub max_missing_chars: usize,
    pub case_fold: bool,
    /// Keep only spans inside the abbreviation's sentence.
    pub same_sentence: bool,
}

impl Default for CandidateRuleConfig {
    fn default() -> Self {
        CandidateRuleConfig {
            char_coverage_min: 0.8,
            max_missing_chars: 1,
            case_fold: true,
            same_sentence: false,
        }
    }
}

impl CandidateRuleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.char_coverage_min > 0.0 && self.char_coverage_min <= 1.0) {
            return Err(Error::Config(format!(
                "char_coverage_min must be in (0, 1], got {}",
                self.char_coverage_min
            )));
        }
        Ok(())
    }
}

/// `min(len + 5, 2 * len)` over the abbreviation's character count.
pub fn max_definition_length(abbrev: &str) -> usize {
    max_definition_length_for(abbrev.chars().count())
}

pub fn max_definition_length_for(len: usize) -> usize {
    (len + 5).min(2 * len)
}

/// `min(len_max + 5, 2 * len_max)`, in tokens.
pub fn window_radius(len_max: usize) -> usize {
    (len_max + 5).min(2 * len_max)
}

fn fold(s: &str, case_fold: bool) -> String {
    if case_fold {
        s.to_lowercase()
    } else {
        s.to_string()
    }
}

/// Applies the four pruning rules to one span.
pub fn passes_rules(abbrev: &str, span: &[Token], cfg: &CandidateRuleConfig) -> bool {
    let texts: Vec<&str> = span.iter().map(|t| t.text.as_str()).collect();
    passes_rules_text(abbrev, &texts, cfg)
}

pub fn passes_rules_text(abbrev: &str, span: &[&str], cfg: &CandidateRuleConfig) -> bool {
    let Some(first_token) = span.first() else {
        return false;
    };
    let abbrev = fold(abbrev, cfg.case_fold);
    let Some(first_char) = abbrev.chars().next() else {
        return false;
    };

    // R1
    if !fold(first_token, cfg.case_fold).contains(first_char) {
        return false;
    }

    // R4
    let joined = fold(&span.join(" "), cfg.case_fold);
    if joined.contains(abbrev.as_str()) {
        return false;
    }

    // R2 and R3 on character multisets.
    let mut available: HashMap<char, usize> = HashMap::new();
    for c in joined.chars().filter(|c| *c != ' ') {
        *available.entry(c).or_default() += 1;
    }
    let total = abbrev.chars().count();
    let mut matched = 0usize;
    for c in abbrev.chars() {
        if let Some(n) = available.get_mut(&c) {
            if *n > 0 {
                *n -= 1;
                matched += 1;
            }
        }
    }
    let missing = total - matched;
    matched as f64 >= cfg.char_coverage_min * total as f64 - 1e-12 && missing <= cfg.max_missing_chars
}

/// All candidate spans for the occurrence at `abbrev_index`, ordered by
/// `(start, end)`.
pub fn generate_candidates(
    doc: &Document,
    abbrev_index: usize,
    cfg: &CandidateRuleConfig,
) -> Vec<CandidateDefinition> {
    let n = doc.tokens.len();
    if abbrev_index >= n {
        return Vec::new();
    }
    let abbrev = doc.tokens[abbrev_index].text.as_str();
    let len_max = max_definition_length(abbrev);
    let delta = window_radius(len_max);
    let sent = doc.tokens[abbrev_index].sent_id;

    let mut out = Vec::new();
    let mut scan = |lo: usize, hi: usize, side: Side| {
        for start in lo..=hi {
            let last = hi.min(start + len_max - 1);
            for end in start..=last {
                let span = &doc.tokens[start..=end];
                if cfg.same_sentence && span.iter().any(|t| t.sent_id != sent) {
                    break;
                }
                if passes_rules(abbrev, span, cfg) {
                    out.push(CandidateDefinition {
                        abbrev_index,
                        start,
                        end,
                        side,
                    });
                }
            }
        }
    };
    if abbrev_index > 0 {
        scan(abbrev_index.saturating_sub(delta), abbrev_index - 1, Side::Left);
    }
    if abbrev_index + 1 < n {
        scan(abbrev_index + 1, (abbrev_index + delta).min(n - 1), Side::Right);
    }
    out
}
