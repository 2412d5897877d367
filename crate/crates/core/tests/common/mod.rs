//! Brute-force reference implementations and random inputs for them.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use abbrev_core::corpus::{Document, Token};
use rand::Rng;

const ALPHABET: &[char] = &['а', 'б', 'в', 'г', 'д', 'е', 'о', 'с'];

pub fn random_word(rng: &mut impl Rng, max_len: usize) -> String {
    let n = rng.gen_range(1..=max_len);
    (0..n).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
}

/// Lowercase words mixed with uppercase abbreviations, up to `max_tokens`.
pub fn random_document(rng: &mut impl Rng, id: usize, max_tokens: usize) -> Document {
    let n = rng.gen_range(1..=max_tokens);
    let tokens = (0..n)
        .map(|_| {
            if rng.gen_bool(0.2) {
                Token::new(random_word(rng, 5).to_uppercase()).abbrev(true)
            } else {
                Token::new(random_word(rng, 7))
            }
        })
        .collect();
    Document::new(format!("r{id}"), tokens)
}

/// Every span of the document checked directly against the window, length
/// and character rules.
pub fn brute_candidates(doc: &Document, a: usize) -> BTreeSet<(usize, usize)> {
    let abbrev: Vec<char> = doc.tokens[a].text.to_lowercase().chars().collect();
    let len = abbrev.len();
    let len_max: usize = if len + 5 < 2 * len { len + 5 } else { 2 * len };
    let delta: i64 = if len_max + 5 < 2 * len_max { len_max + 5 } else { 2 * len_max } as i64;
    let n = doc.tokens.len() as i64;
    let a = a as i64;
    let mut out = BTreeSet::new();
    for start in 0..n {
        for end in start..n {
            if start <= a && a <= end {
                continue;
            }
            if (end - start + 1) as usize > len_max {
                continue;
            }
            let inside_left = start >= a - delta && end <= a - 1;
            let inside_right = start >= a + 1 && end <= a + delta;
            if !inside_left && !inside_right {
                continue;
            }
            let words: Vec<String> = (start..=end)
                .map(|i| doc.tokens[i as usize].text.to_lowercase())
                .collect();
            if !words[0].contains(abbrev[0]) {
                continue;
            }
            let joined = words.join(" ");
            let abbrev_str: String = abbrev.iter().collect();
            if joined.contains(&abbrev_str) {
                continue;
            }
            let mut have: HashMap<char, i64> = HashMap::new();
            for c in words.concat().chars() {
                *have.entry(c).or_default() += 1;
            }
            let mut need: HashMap<char, i64> = HashMap::new();
            for &c in &abbrev {
                *need.entry(c).or_default() += 1;
            }
            let matched: i64 = need
                .iter()
                .map(|(c, k)| (*k).min(*have.get(c).unwrap_or(&0)))
                .sum();
            let missing = len as i64 - matched;
            if 5 * matched >= 4 * len as i64 && missing <= 1 {
                out.insert((start as usize, end as usize));
            }
        }
    }
    out
}

/// Pairwise count over all (positive, negative) pairs.
pub fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn is_subsequence(sub: &[char], of: &[char]) -> bool {
    let mut it = of.iter();
    sub.iter().all(|c| it.any(|d| d == c))
}

/// Longest subsequence of `a` that is also a subsequence of `b`, by trying
/// every subset of `a`.
pub fn brute_lcs(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let sub: Vec<char> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| a[i]).collect();
        if sub.len() > best && is_subsequence(&sub, &b) {
            best = sub.len();
        }
    }
    best
}
