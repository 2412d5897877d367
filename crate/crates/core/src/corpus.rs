//! Corpus data model, JSON Lines persistence and train/test splitting.
//!
//! A corpus file holds one [`Document`] per line:
//!
//! ```text
//! {"doc_id": "d1", "tokens": [{"text": "СД", "paren_depth": 1, "sent_id": 0, "is_abbrev": true}],
//!  "gold_pairs": [{"abbrev_index": 3, "def_start": 0, "def_end": 1}]}
//! ```
//!
//! Unknown fields are rejected. Definition spans are inclusive on both ends.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Token {
    pub text: String,
    pub paren_depth: u32,
    pub sent_id: u32,
    pub is_abbrev: bool,
}

impl Token {
    pub fn new(text: impl Into<String>) -> Self {
        Token {
            text: text.into(),
            paren_depth: 0,
            sent_id: 0,
            is_abbrev: false,
        }
    }

    pub fn with_paren_depth(mut self, depth: u32) -> Self {
        self.paren_depth = depth;
        self
    }

    pub fn with_sent_id(mut self, sent_id: u32) -> Self {
        self.sent_id = sent_id;
        self
    }

    pub fn abbrev(mut self, is_abbrev: bool) -> Self {
        self.is_abbrev = is_abbrev;
        self
    }
}

/// Gold link between an abbreviation occurrence and its in-text definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldPair {
    pub abbrev_index: usize,
    pub def_start: usize,
    /// Inclusive.
    pub def_end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<Token>,
    #[serde(default)]
    pub gold_pairs: Vec<GoldPair>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, tokens: Vec<Token>) -> Self {
        Document {
            doc_id: doc_id.into(),
            tokens,
            gold_pairs: Vec::new(),
        }
    }

    /// Checks every token and gold pair invariant.
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::Validation {
            doc_id: self.doc_id.clone(),
            message,
        };
        for (i, tok) in self.tokens.iter().enumerate() {
            if tok.text.is_empty() {
                return Err(fail(format!("token {i} has empty text")));
            }
            if tok.text.contains(' ') {
                return Err(fail(format!("token {i} contains a space: {:?}", tok.text)));
            }
        }
        let n = self.tokens.len();
        for (k, gp) in self.gold_pairs.iter().enumerate() {
            if gp.abbrev_index >= n || gp.def_start >= n || gp.def_end >= n {
                return Err(fail(format!(
                    "gold pair {k} ({}, {}..={}) out of range for {n} tokens",
                    gp.abbrev_index, gp.def_start, gp.def_end
                )));
            }
            if gp.def_start > gp.def_end {
                return Err(fail(format!("gold pair {k} has def_start > def_end")));
            }
            if (gp.def_start..=gp.def_end).contains(&gp.abbrev_index) {
                return Err(fail(format!(
                    "gold pair {k} definition span contains the abbreviation index"
                )));
            }
            if !self.tokens[gp.abbrev_index].is_abbrev {
                return Err(fail(format!(
                    "gold pair {k} points at token {} which is not labeled as an abbreviation",
                    gp.abbrev_index
                )));
            }
        }
        Ok(())
    }

    /// Gold definition spans for the occurrence at `abbrev_index`.
    pub fn gold_spans_for(&self, abbrev_index: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.gold_pairs
            .iter()
            .filter(move |gp| gp.abbrev_index == abbrev_index)
            .map(|gp| (gp.def_start, gp.def_end))
    }

    /// Indices of tokens carrying the gold abbreviation label.
    pub fn gold_abbrev_indices(&self) -> Vec<usize> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_abbrev)
            .map(|(i, _)| i)
            .collect()
    }

    /// Space-joined text of the inclusive span.
    pub fn span_text(&self, start: usize, end: usize) -> String {
        self.tokens[start..=end]
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let c = Corpus { documents };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for doc in &self.documents {
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(Error::Validation {
                    doc_id: doc.doc_id.clone(),
                    message: "duplicate doc_id".into(),
                });
            }
            doc.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.documents.iter().map(|d| d.tokens.len()).sum()
    }
}

/// Reads a corpus from JSON Lines. Blank lines are skipped.
pub fn read_corpus<R: Read>(reader: R) -> Result<Corpus> {
    let mut documents = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        documents.push(doc);
    }
    Corpus::new(documents)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(file)
}

pub fn write_corpus<W: Write>(corpus: &Corpus, mut writer: W) -> Result<()> {
    for doc in &corpus.documents {
        serde_json::to_writer(&mut writer, doc)?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_corpus(corpus, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Token and pair counts recorded next to a fixture corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub documents: usize,
    pub tokens: usize,
    pub abbreviations: usize,
    pub gold_pairs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Manifest {
    pub fn of(corpus: &Corpus) -> Self {
        let s = corpus_stats(corpus);
        Manifest {
            documents: s.documents,
            tokens: s.tokens,
            abbreviations: s.abbreviations,
            gold_pairs: s.gold_pairs,
            seed: None,
        }
    }
}

/// `corpus.jsonl` -> `corpus.manifest.json`
pub fn manifest_path(corpus_path: impl AsRef<Path>) -> PathBuf {
    corpus_path.as_ref().with_extension("manifest.json")
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn train_size(n: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Split(format!("ratio must be in (0, 1), got {ratio}")));
    }
    if n < 2 {
        return Err(Error::Split(format!("need at least 2 units, got {n}")));
    }
    // Both sides stay non-empty.
    Ok(((ratio * n as f64).round() as usize).clamp(1, n - 1))
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Document-level split. Each side keeps the original document order.
pub fn split_corpus(corpus: &Corpus, ratio: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    let n = corpus.documents.len();
    let n_train = train_size(n, ratio)?;
    let idx = shuffled_indices(n, seed);
    let mut in_train = vec![false; n];
    for &i in &idx[..n_train] {
        in_train[i] = true;
    }
    let (mut train, mut test) = (Vec::with_capacity(n_train), Vec::with_capacity(n - n_train));
    for (doc, is_train) in corpus.documents.iter().zip(in_train) {
        if is_train {
            train.push(doc.clone());
        } else {
            test.push(doc.clone());
        }
    }
    Ok((Corpus { documents: train }, Corpus { documents: test }))
}

/// Position of one token in a corpus: (document index, token index).
pub type TokenRef = (usize, usize);

/// Token-level split, used only by detection where features are token-internal.
pub fn split_tokens(corpus: &Corpus, ratio: f64, seed: u64) -> Result<(Vec<TokenRef>, Vec<TokenRef>)> {
    let all: Vec<TokenRef> = corpus
        .documents
        .iter()
        .enumerate()
        .flat_map(|(d, doc)| (0..doc.tokens.len()).map(move |t| (d, t)))
        .collect();
    let n_train = train_size(all.len(), ratio)?;
    let idx = shuffled_indices(all.len(), seed);
    let mut in_train = vec![false; all.len()];
    for &i in &idx[..n_train] {
        in_train[i] = true;
    }
    let (train, test): (Vec<_>, Vec<_>) = all.into_iter().zip(in_train).partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(r, _)| r).collect(),
        test.into_iter().map(|(r, _)| r).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub documents: usize,
    pub tokens: usize,
    pub abbreviations: usize,
    pub abbreviation_ratio: f64,
    pub gold_pairs: usize,
}

pub fn corpus_stats(corpus: &Corpus) -> StatsReport {
    let mut tokens = 0;
    let mut abbreviations = 0;
    let mut gold_pairs = 0;
    for doc in &corpus.documents {
        tokens += doc.tokens.len();
        abbreviations += doc.tokens.iter().filter(|t| t.is_abbrev).count();
        gold_pairs += doc.gold_pairs.len();
    }
    let abbreviation_ratio = if tokens == 0 {
        0.0
    } else {
        abbreviations as f64 / tokens as f64
    };
    StatsReport {
        documents: corpus.documents.len(),
        tokens,
        abbreviations,
        abbreviation_ratio,
        gold_pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, n: usize) -> Document {
        Document::new(id, (0..n).map(|i| Token::new(format!("w{i}"))).collect())
    }

    #[test]
    fn single_doc_roundtrip() {
        let line = r#"{"doc_id":"a","tokens":[{"text":"x","paren_depth":0,"sent_id":0,"is_abbrev":false},{"text":"y","paren_depth":0,"sent_id":0,"is_abbrev":false},{"text":"z","paren_depth":0,"sent_id":0,"is_abbrev":false}],"gold_pairs":[]}"#;
        let c = read_corpus(line.as_bytes()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.documents[0].tokens.len(), 3);
        let mut buf = Vec::new();
        write_corpus(&c, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), line);
    }

    #[test]
    fn out_of_range_gold_span_names_doc() {
        let mut d = doc("bad-doc", 3);
        d.tokens[0].is_abbrev = true;
        d.gold_pairs.push(GoldPair {
            abbrev_index: 0,
            def_start: 1,
            def_end: 3,
        });
        let line = serde_json::to_string(&d).unwrap();
        match read_corpus(line.as_bytes()) {
            Err(Error::Validation { doc_id, .. }) => assert_eq!(doc_id, "bad-doc"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let good = serde_json::to_string(&doc("a", 1)).unwrap();
        let text = format!("{good}\n{{not json\n");
        match read_corpus(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        let line = r#"{"doc_id":"a","tokens":[],"gold_pairs":[],"extra":1}"#;
        assert!(matches!(read_corpus(line.as_bytes()), Err(Error::Parse { .. })));
        let line = r#"{"doc_id":"a","tokens":[{"text":"x","paren_depth":0,"sent_id":0,"is_abbrev":false,"pos":"N"}]}"#;
        assert!(matches!(read_corpus(line.as_bytes()), Err(Error::Parse { .. })));
    }

    #[test]
    fn gold_span_must_not_cover_abbreviation() {
        let mut d = doc("a", 4);
        d.tokens[2].is_abbrev = true;
        d.gold_pairs.push(GoldPair {
            abbrev_index: 2,
            def_start: 1,
            def_end: 3,
        });
        assert!(d.validate().is_err());
    }

    #[test]
    fn gold_pair_requires_abbrev_label() {
        let mut d = doc("a", 4);
        d.gold_pairs.push(GoldPair {
            abbrev_index: 3,
            def_start: 0,
            def_end: 1,
        });
        assert!(d.validate().is_err());
        d.tokens[3].is_abbrev = true;
        assert!(d.validate().is_ok());
    }

    #[test]
    fn duplicate_doc_ids_rejected() {
        assert!(Corpus::new(vec![doc("a", 1), doc("a", 2)]).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let c = Corpus::new((0..10).map(|i| doc(&format!("d{i}"), 2)).collect()).unwrap();
        let (tr, te) = split_corpus(&c, 0.8, 7).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let (tr2, te2) = split_corpus(&c, 0.8, 7).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);

        let c5 = Corpus::new((0..5).map(|i| doc(&format!("d{i}"), 2)).collect()).unwrap();
        for seed in [1, 2] {
            let (tr, te) = split_corpus(&c5, 0.8, seed).unwrap();
            assert_eq!((tr.len(), te.len()), (4, 1));
        }
    }

    #[test]
    fn split_rejects_tiny_corpus_and_bad_ratio() {
        let c = Corpus::new(vec![doc("a", 1)]).unwrap();
        assert!(matches!(split_corpus(&c, 0.8, 0), Err(Error::Split(_))));
        let c = Corpus::new(vec![doc("a", 1), doc("b", 1)]).unwrap();
        assert!(split_corpus(&c, 1.0, 0).is_err());
        assert!(split_corpus(&c, 0.0, 0).is_err());
        let (tr, te) = split_corpus(&c, 0.8, 0).unwrap();
        assert_eq!((tr.len(), te.len()), (1, 1));
    }

    #[test]
    fn token_split_is_partition() {
        let c = Corpus::new((0..4).map(|i| doc(&format!("d{i}"), 5)).collect()).unwrap();
        let (tr, te) = split_tokens(&c, 0.8, 3).unwrap();
        assert_eq!(tr.len(), 16);
        assert_eq!(te.len(), 4);
        let all: HashSet<_> = tr.iter().chain(&te).collect();
        assert_eq!(all.len(), 20);
    }

    #[test]
    fn stats() {
        let s = corpus_stats(&Corpus::default());
        assert_eq!((s.tokens, s.abbreviations, s.gold_pairs), (0, 0, 0));
        assert_eq!(s.abbreviation_ratio, 0.0);

        let mut d = doc("a", 100);
        for i in 0..6 {
            d.tokens[i * 10].is_abbrev = true;
        }
        let s = corpus_stats(&Corpus::new(vec![d]).unwrap());
        assert_eq!(s.tokens, 100);
        assert_eq!(s.abbreviations, 6);
        assert!((s.abbreviation_ratio - 0.06).abs() < 1e-12);
    }

    #[test]
    fn manifest_path_sibling() {
        assert_eq!(
            manifest_path("fixtures/synth.jsonl"),
            PathBuf::from("fixtures/synth.manifest.json")
        );
    }
}
