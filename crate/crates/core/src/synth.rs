//! Synthetic corpora with planted abbreviations and known gold pairs.
//!
//! Words are pseudo-Cyrillic strings built from syllables. A definition is
//! two to four term words; its abbreviation is their uppercased initials.
//! Each definition is followed by its abbreviation in parentheses (or the
//! reverse), and later sentences reuse the abbreviation. Every occurrence is
//! linked to the span of its definition.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, GoldPair, Manifest, Token};
use crate::error::{Error, Result};
use crate::ml::Dataset;
use crate::textprep::{Dictionary, TokenizerConfig};

const CONSONANTS: &[char] = &[
    'б', 'в', 'г', 'д', 'ж', 'з', 'к', 'л', 'м', 'н', 'п', 'р', 'с', 'т', 'ф', 'х', 'ц', 'ч', 'ш',
];
const VOWELS: &[char] = &['а', 'е', 'и', 'о', 'у', 'ы', 'я'];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub target_tokens: usize,
    pub documents: usize,
    /// Fraction of tokens that are abbreviation occurrences.
    pub abbrev_ratio: f64,
    /// Extra usages per definition are drawn from `0..=max_usages`.
    pub max_usages: usize,
    /// Probability of one or two filler words between a definition and its
    /// abbreviation.
    pub distance_jitter: f64,
    /// Probability of a decoy span with matching initials near a definition.
    pub decoy_rate: f64,
    /// Probability that an abbreviation is used without any definition.
    pub missing_definition_rate: f64,
    /// Probability of the `ABBR (definition)` order.
    pub reverse_rate: f64,
    pub vocabulary: usize,
    pub term_vocabulary: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            target_tokens: 5000,
            documents: 40,
            abbrev_ratio: 0.06,
            max_usages: 2,
            distance_jitter: 0.1,
            decoy_rate: 0.1,
            missing_definition_rate: 0.05,
            reverse_rate: 0.1,
            vocabulary: 600,
            term_vocabulary: 400,
        }
    }
}

impl SynthConfig {
    /// Decoys, missing definitions and reversed order at a few percent, no
    /// distance jitter.
    pub fn low_noise(mut self) -> Self {
        self.distance_jitter = 0.0;
        self.decoy_rate = 0.05;
        self.missing_definition_rate = 0.02;
        self.reverse_rate = 0.05;
        self
    }

    pub fn noiseless(mut self) -> Self {
        self.distance_jitter = 0.0;
        self.decoy_rate = 0.0;
        self.missing_definition_rate = 0.0;
        self.reverse_rate = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("abbrev_ratio", self.abbrev_ratio),
            ("distance_jitter", self.distance_jitter),
            ("decoy_rate", self.decoy_rate),
            ("missing_definition_rate", self.missing_definition_rate),
            ("reverse_rate", self.reverse_rate),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if self.documents == 0 || self.target_tokens < self.documents {
            return Err(Error::Config(
                "need at least one document and one token per document".into(),
            ));
        }
        if self.vocabulary < 10 || self.term_vocabulary < 10 {
            return Err(Error::Config("vocabularies need at least 10 words".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub corpus: Corpus,
    pub dictionary: Dictionary,
    pub manifest: Manifest,
}

fn pseudo_word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(*CONSONANTS.choose(rng).unwrap());
        w.push(*VOWELS.choose(rng).unwrap());
    }
    if rng.gen_bool(0.5) {
        w.push(*CONSONANTS.choose(rng).unwrap());
    }
    w
}

fn vocabulary(rng: &mut ChaCha8Rng, n: usize, taken: &BTreeSet<String>) -> Vec<String> {
    let mut out = BTreeSet::new();
    while out.len() < n {
        let syllables = rng.gen_range(2..=4);
        let w = pseudo_word(rng, syllables);
        if !taken.contains(&w) {
            out.insert(w);
        }
    }
    let mut v: Vec<String> = out.into_iter().collect();
    v.shuffle(rng);
    v
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

struct Vocab {
    filler: Vec<String>,
    terms: Vec<String>,
    dictionary: Dictionary,
    stopwords: BTreeSet<String>,
}

/// A definition with its abbreviation.
struct Planted {
    words: Vec<String>,
    abbrev: String,
}

fn plant(rng: &mut ChaCha8Rng, vocab: &Vocab, used: &BTreeSet<String>) -> Planted {
    loop {
        let n = rng.gen_range(2..=4);
        let words: Vec<String> = (0..n).map(|_| vocab.terms.choose(rng).unwrap().clone()).collect();
        let abbrev: String = words
            .iter()
            .filter_map(|w| w.chars().next())
            .flat_map(char::to_uppercase)
            .collect();
        let lower = abbrev.to_lowercase();
        if used.contains(&abbrev)
            || words.join(" ").contains(&lower)
            || vocab.stopwords.contains(&lower)
            || vocab.dictionary.contains(&lower)
        {
            continue;
        }
        return Planted { words, abbrev };
    }
}

/// One generated sentence before flattening. `abbrev` and `def` are token
/// offsets inside the sentence; `group` ties usages to their definition.
struct Sentence {
    tokens: Vec<Token>,
    abbrev: Option<usize>,
    def: Option<(usize, usize)>,
    group: Option<usize>,
    key: f64,
}

fn filler(rng: &mut ChaCha8Rng, vocab: &Vocab, n: usize) -> Vec<Token> {
    (0..n).map(|_| Token::new(vocab.filler.choose(rng).unwrap().clone())).collect()
}

fn decoy(rng: &mut ChaCha8Rng, vocab: &Vocab, abbrev: &str) -> Vec<Token> {
    abbrev
        .to_lowercase()
        .chars()
        .map(|c| {
            let pool: Vec<&String> = vocab.terms.iter().filter(|w| w.starts_with(c)).collect();
            let w = match pool.choose(rng) {
                Some(w) => (*w).clone(),
                None => format!("{c}{}", vocab.filler.choose(rng).unwrap()),
            };
            Token::new(w)
        })
        .collect()
}

fn definition_sentence(rng: &mut ChaCha8Rng, vocab: &Vocab, cfg: &SynthConfig, p: &Planted) -> Sentence {
    let lead = rng.gen_range(0..=3);
    let mut tokens = filler(rng, vocab, lead);
    let def_tokens: Vec<Token> = p.words.iter().map(Token::new).collect();
    let abbrev_index;
    let def;
    if rng.gen_bool(cfg.reverse_rate) {
        abbrev_index = tokens.len();
        tokens.push(Token::new(&p.abbrev));
        let start = tokens.len();
        tokens.extend(def_tokens.into_iter().map(|t| t.with_paren_depth(1)));
        def = (start, tokens.len() - 1);
    } else {
        let start = tokens.len();
        tokens.extend(def_tokens);
        def = (start, tokens.len() - 1);
        if rng.gen_bool(cfg.distance_jitter) {
            let n = rng.gen_range(1..=2);
            tokens.extend(filler(rng, vocab, n));
        }
        abbrev_index = tokens.len();
        tokens.push(Token::new(&p.abbrev).with_paren_depth(1));
    }
    let tail = rng.gen_range(1..=3);
    tokens.extend(filler(rng, vocab, tail));
    if rng.gen_bool(cfg.decoy_rate) {
        tokens.extend(decoy(rng, vocab, &p.abbrev));
        tokens.extend(filler(rng, vocab, 1));
    }
    Sentence {
        tokens,
        abbrev: Some(abbrev_index),
        def: Some(def),
        group: None,
        key: 0.0,
    }
}

fn usage_sentence(rng: &mut ChaCha8Rng, vocab: &Vocab, abbrev: &str) -> Sentence {
    let n = rng.gen_range(4..=9);
    let mut tokens = filler(rng, vocab, n);
    let at = rng.gen_range(1..=n);
    tokens.insert(at, Token::new(abbrev));
    Sentence {
        tokens,
        abbrev: Some(at),
        def: None,
        group: None,
        key: 0.0,
    }
}

fn generate_document(
    rng: &mut ChaCha8Rng,
    vocab: &Vocab,
    cfg: &SynthConfig,
    doc_id: String,
    budget: usize,
    occurrences: usize,
) -> Document {
    let mut sentences: Vec<Sentence> = Vec::new();
    let mut used = BTreeSet::new();
    let mut remaining = occurrences;
    let mut spent = 0usize;
    let mut group = 0usize;
    while remaining > 0 {
        let p = plant(rng, vocab, &used);
        used.insert(p.abbrev.clone());
        let usages = rng.gen_range(0..=cfg.max_usages).min(remaining - 1);
        let has_def = !rng.gen_bool(cfg.missing_definition_rate);
        let def_key = rng.gen_range(0.0..0.5);
        let mut batch = Vec::new();
        let first = if has_def {
            definition_sentence(rng, vocab, cfg, &p)
        } else {
            usage_sentence(rng, vocab, &p.abbrev)
        };
        batch.push(Sentence {
            group: Some(group),
            key: def_key,
            ..first
        });
        for _ in 0..usages {
            let s = usage_sentence(rng, vocab, &p.abbrev);
            batch.push(Sentence {
                group: Some(group),
                key: rng.gen_range(def_key..1.0),
                ..s
            });
        }
        let size: usize = batch.iter().map(|s| s.tokens.len()).sum();
        if spent + size > budget {
            break;
        }
        spent += size;
        remaining -= batch.len();
        sentences.extend(batch);
        group += 1;
    }
    while spent < budget {
        let n = rng.gen_range(5..=12).min(budget - spent);
        let mut tokens = filler(rng, vocab, n);
        tokens[0].text = capitalize(&tokens[0].text);
        spent += n;
        sentences.push(Sentence {
            tokens,
            abbrev: None,
            def: None,
            group: None,
            key: rng.gen_range(0.0..1.0),
        });
    }
    sentences.sort_by(|a, b| a.key.total_cmp(&b.key));

    let mut tokens = Vec::with_capacity(budget);
    let mut def_span = vec![None; group];
    let mut occ: Vec<(usize, Option<usize>)> = Vec::new();
    for (sent_id, s) in sentences.into_iter().enumerate() {
        let base = tokens.len();
        if let (Some(g), Some((a, b))) = (s.group, s.def) {
            def_span[g] = Some((base + a, base + b));
        }
        if let Some(a) = s.abbrev {
            occ.push((base + a, s.group));
        }
        tokens.extend(s.tokens.into_iter().map(|t| t.with_sent_id(sent_id as u32)));
    }
    let mut gold_pairs = Vec::new();
    for (a, g) in occ {
        tokens[a].is_abbrev = true;
        if let Some((def_start, def_end)) = g.and_then(|g| def_span[g]) {
            gold_pairs.push(GoldPair {
                abbrev_index: a,
                def_start,
                def_end,
            });
        }
    }
    gold_pairs.sort_by_key(|g| g.abbrev_index);
    Document {
        doc_id,
        tokens,
        gold_pairs,
    }
}

/// Generates a corpus of exactly `target_tokens` tokens.
pub fn synthesize(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stopwords = TokenizerConfig::default().stopwords;
    let filler = vocabulary(&mut rng, cfg.vocabulary, &stopwords);
    let mut taken: BTreeSet<String> = filler.iter().cloned().collect();
    taken.extend(stopwords.iter().cloned());
    let terms = vocabulary(&mut rng, cfg.term_vocabulary, &taken);
    let dictionary = Dictionary::from_words(filler.iter().chain(&terms));
    let vocab = Vocab {
        filler,
        terms,
        dictionary,
        stopwords,
    };

    let total_occ = (cfg.abbrev_ratio * cfg.target_tokens as f64).round() as usize;
    let base = cfg.target_tokens / cfg.documents;
    let mut documents = Vec::with_capacity(cfg.documents);
    for d in 0..cfg.documents {
        let budget = base + usize::from(d < cfg.target_tokens % cfg.documents);
        let occ = total_occ / cfg.documents + usize::from(d < total_occ % cfg.documents);
        documents.push(generate_document(&mut rng, &vocab, cfg, format!("synth-{d:04}"), budget, occ));
    }
    let corpus = Corpus::new(documents)?;
    let mut manifest = Manifest::of(&corpus);
    manifest.seed = Some(cfg.seed);
    Ok(SynthOutput {
        corpus,
        dictionary: vocab.dictionary,
        manifest,
    })
}

/// Two-dimensional points separated by the line `x0 + x1 = 0` with a margin.
pub fn separable_fixture(n: usize, margin: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    while x.len() < n {
        let p = [rng.gen_range(-1.0..1.0f64), rng.gen_range(-1.0..1.0f64)];
        let s = p[0] + p[1];
        if s.abs() < margin {
            continue;
        }
        x.push(p.to_vec());
        y.push(s > 0.0);
    }
    Dataset { x, y, weights: None }
}

/// Uniform points in `[-1, 1]^2` labeled positive when `x0 * x1 > 0`.
pub fn xor_fixture(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let p = [rng.gen_range(-1.0..1.0f64), rng.gen_range(-1.0..1.0f64)];
        y.push(p[0] * p[1] > 0.0);
        x.push(p.to_vec());
    }
    Dataset { x, y, weights: None }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            target_tokens: 1200,
            documents: 10,
            ..Default::default()
        }
    }

    #[test]
    fn exact_token_budget() {
        let out = synthesize(&small()).unwrap();
        assert_eq!(out.corpus.token_count(), 1200);
        assert_eq!(out.manifest.tokens, 1200);
        assert_eq!(out.corpus.len(), 10);
    }

    #[test]
    fn abbreviation_ratio_close() {
        let out = synthesize(&SynthConfig::default()).unwrap();
        let ratio = out.manifest.abbreviations as f64 / out.manifest.tokens as f64;
        assert!((ratio - 0.06).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn deterministic() {
        assert_eq!(synthesize(&small()).unwrap(), synthesize(&small()).unwrap());
        let other = synthesize(&SynthConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(other.corpus, synthesize(&small()).unwrap().corpus);
    }

    #[test]
    fn gold_pairs_are_initials() {
        let out = synthesize(&small().noiseless()).unwrap();
        assert!(out.manifest.gold_pairs > 0);
        for doc in &out.corpus.documents {
            for gp in &doc.gold_pairs {
                let initials: String = doc.tokens[gp.def_start..=gp.def_end]
                    .iter()
                    .filter_map(|t| t.text.chars().next())
                    .flat_map(char::to_uppercase)
                    .collect();
                assert_eq!(doc.tokens[gp.abbrev_index].text, initials);
                assert!(doc.tokens[gp.abbrev_index].is_abbrev);
            }
        }
    }

    #[test]
    fn noiseless_definitions_are_adjacent() {
        let out = synthesize(&small().noiseless()).unwrap();
        for doc in &out.corpus.documents {
            for gp in doc.gold_pairs.iter().filter(|g| doc.tokens[g.abbrev_index].paren_depth == 1) {
                assert_eq!(gp.def_end + 1, gp.abbrev_index);
            }
        }
    }

    #[test]
    fn abbreviations_not_in_dictionary() {
        let out = synthesize(&small()).unwrap();
        for doc in &out.corpus.documents {
            for t in doc.tokens.iter().filter(|t| t.is_abbrev) {
                assert!(!out.dictionary.contains(&t.text));
            }
            for t in doc.tokens.iter().filter(|t| !t.is_abbrev) {
                assert!(out.dictionary.contains(&t.text), "{}", t.text);
            }
        }
    }

    #[test]
    fn fixtures_shapes() {
        let s = separable_fixture(100, 0.2, 3);
        assert_eq!(s.len(), 100);
        assert!(s.x.iter().all(|p| (p[0] + p[1]).abs() >= 0.2));
        let x = xor_fixture(64, 3);
        let (pos, neg) = x.class_counts();
        assert!(pos > 10 && neg > 10);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(synthesize(&SynthConfig {
            abbrev_ratio: 1.5,
            ..Default::default()
        })
        .is_err());
        assert!(synthesize(&SynthConfig {
            documents: 0,
            ..Default::default()
        })
        .is_err());
    }
}
