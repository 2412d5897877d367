//! Features of an (abbreviation, candidate definition) pair.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::candgen::CandidateDefinition;
use crate::corpus::{Document, Token};
use crate::error::{Error, Result};

pub const PAIR_FEATURE_NAMES: [&str; PAIR_DIM] = [
    "distance",
    "first_letter_matches",
    "parenthesis",
    "semantic_similarity",
    "lcs_length",
];

pub const PAIR_DIM: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub distance: usize,
    pub first_letter_matches: usize,
    pub paren_flag: bool,
    pub semantic_sim: f64,
    pub lcs_len: usize,
}

impl PairFeatures {
    /// Order follows [`PAIR_FEATURE_NAMES`].
    pub fn to_vector(&self) -> Vec<f64> {
        vec![
            self.distance as f64,
            self.first_letter_matches as f64,
            if self.paren_flag { 1.0 } else { 0.0 },
            self.semantic_sim,
            self.lcs_len as f64,
        ]
    }
}

/// Maps token text to a fixed-length vector. Must be deterministic.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Hashed character n-grams (n = 1..=3) of the lowercased text, bucketed by
/// FNV-1a 64 modulo `dim` and L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashNgramEmbedder {
    pub dim: usize,
}

impl Default for HashNgramEmbedder {
    fn default() -> Self {
        HashNgramEmbedder { dim: 256 }
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl EmbeddingProvider for HashNgramEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let chars: Vec<char> = text.to_lowercase().chars().collect();
        let mut buf = String::new();
        for n in 1..=3 {
            for gram in chars.windows(n) {
                buf.clear();
                buf.extend(gram);
                v[(fnv1a64(buf.as_bytes()) % self.dim as u64) as usize] += 1.0;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

/// Precomputed vectors read from `token<TAB>v1 v2 ... vDim` lines. Unknown
/// tokens embed to zero and are counted.
#[derive(Debug, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    misses: AtomicUsize,
}

impl EmbeddingTable {
    pub fn from_reader_text(text: &str) -> Result<Self> {
        let mut dim = 0usize;
        let mut vectors = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let (token, rest) = line
                .split_once('\t')
                .ok_or_else(|| parse("expected token<TAB>vector".into()))?;
            let v: Vec<f64> = rest
                .split_whitespace()
                .map(|x| x.parse::<f64>().map_err(|e| parse(e.to_string())))
                .collect::<Result<_>>()?;
            if v.is_empty() {
                return Err(parse("empty vector".into()));
            }
            if dim == 0 {
                dim = v.len();
            } else if v.len() != dim {
                return Err(parse(format!("vector has {} values, expected {dim}", v.len())));
            }
            vectors.insert(token.to_string(), v);
        }
        Ok(EmbeddingTable {
            dim,
            vectors,
            misses: AtomicUsize::new(0),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader_text(&text)
    }

    /// Lookups that found no vector so far.
    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for EmbeddingTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        if let Some(v) = self
            .vectors
            .get(text)
            .or_else(|| self.vectors.get(&text.to_lowercase()))
        {
            return v.clone();
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        vec![0.0; self.dim]
    }
}

/// `min(|a - start|, |a - end|)`. Fails when the span covers `a`.
pub fn pair_distance(a: usize, start: usize, end: usize) -> Result<usize> {
    if start > end {
        return Err(Error::InvalidSpan(format!("start {start} > end {end}")));
    }
    if (start..=end).contains(&a) {
        return Err(Error::InvalidSpan(format!(
            "span {start}..={end} contains abbreviation index {a}"
        )));
    }
    Ok(a.abs_diff(start).min(a.abs_diff(end)))
}

fn first_char_folded(s: &str) -> Option<char> {
    s.chars().next().and_then(|c| c.to_lowercase().next())
}

/// Greedy in-order alignment of abbreviation characters against the first
/// letters of the span tokens. Each token is used at most once.
pub fn first_letter_matches(abbrev: &str, span: &[Token]) -> usize {
    let initials: Vec<char> = span.iter().filter_map(|t| first_char_folded(&t.text)).collect();
    let mut j = 0;
    let mut count = 0;
    for c in abbrev.to_lowercase().chars() {
        while j < initials.len() {
            j += 1;
            if initials[j - 1] == c {
                count += 1;
                break;
            }
        }
    }
    count
}

/// True when the abbreviation is parenthesized or every span token is.
pub fn paren_flag(doc: &Document, a: usize, start: usize, end: usize) -> bool {
    doc.tokens[a].paren_depth > 0 || doc.tokens[start..=end].iter().all(|t| t.paren_depth > 0)
}

pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot / (nu * nv)).clamp(-1.0, 1.0)
}

/// Cosine between the abbreviation's embedding and the mean embedding of
/// the span tokens.
pub fn semantic_similarity(
    abbrev: &str,
    span: &[Token],
    provider: &dyn EmbeddingProvider,
) -> Result<f64> {
    if span.is_empty() {
        return Err(Error::InvalidSpan("empty span".into()));
    }
    let dim = provider.dim();
    let embed = |text: &str| -> Result<Vec<f64>> {
        let v = provider.embed(text);
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        Ok(v)
    };
    let a = embed(abbrev)?;
    let mut mean = vec![0.0; dim];
    for t in span {
        for (m, x) in mean.iter_mut().zip(embed(&t.text)?) {
            *m += x;
        }
    }
    let n = span.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(cosine(&a, &mean))
}

/// Longest common subsequence length over characters.
pub fn lcs_chars(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for &ca in &a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS of the lowercased abbreviation and the lowercased space-joined span.
pub fn lcs_length(abbrev: &str, span: &[Token]) -> usize {
    let joined = span
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    lcs_chars(&abbrev.to_lowercase(), &joined.to_lowercase())
}

pub fn extract_pair_features(
    doc: &Document,
    cand: &CandidateDefinition,
    provider: &dyn EmbeddingProvider,
) -> Result<PairFeatures> {
    let n = doc.tokens.len();
    if cand.abbrev_index >= n || cand.end >= n {
        return Err(Error::InvalidSpan(format!(
            "candidate {}..={} for {} out of range for {n} tokens",
            cand.start, cand.end, cand.abbrev_index
        )));
    }
    let abbrev = doc.tokens[cand.abbrev_index].text.as_str();
    let distance = pair_distance(cand.abbrev_index, cand.start, cand.end)?;
    let span = &doc.tokens[cand.start..=cand.end];
    Ok(PairFeatures {
        distance,
        first_letter_matches: first_letter_matches(abbrev, span),
        paren_flag: paren_flag(doc, cand.abbrev_index, cand.start, cand.end),
        semantic_sim: semantic_similarity(abbrev, span, provider)?,
        lcs_len: lcs_length(abbrev, span),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candgen::Side;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> Vec<Token> {
        words.iter().map(|w| Token::new(*w)).collect()
    }

    /// Fixed vectors for a handful of strings.
    struct Stub(HashMap<&'static str, Vec<f64>>);

    impl EmbeddingProvider for Stub {
        fn dim(&self) -> usize {
            3
        }
        fn embed(&self, text: &str) -> Vec<f64> {
            self.0.get(text).cloned().unwrap_or_else(|| vec![0.0; 3])
        }
    }

    struct BadDim;

    impl EmbeddingProvider for BadDim {
        fn dim(&self) -> usize {
            4
        }
        fn embed(&self, _: &str) -> Vec<f64> {
            vec![1.0; 3]
        }
    }

    #[test]
    fn distance_examples() {
        assert_eq!(pair_distance(10, 4, 7).unwrap(), 3);
        assert_eq!(pair_distance(5, 6, 6).unwrap(), 1);
        assert_eq!(pair_distance(0, 3, 9).unwrap(), 3);
        assert!(pair_distance(5, 4, 6).is_err());
    }

    #[test]
    fn first_letters() {
        assert_eq!(first_letter_matches("СД", &toks(&["сахарный", "диабет"])), 2);
        assert_eq!(first_letter_matches("СД", &toks(&["диабет", "сахарный"])), 1);
        assert_eq!(first_letter_matches("СД", &toks(&["сахарный"])), 1);
        assert_eq!(first_letter_matches("ИБС", &toks(&["ишемическая", "болезнь", "сердца"])), 3);
    }

    #[test]
    fn paren_cases() {
        let mut d = Document::new("d", toks(&["сахарный", "диабет", "СД", "и", "прочее"]));
        assert!(!paren_flag(&d, 2, 0, 1));
        d.tokens[2].paren_depth = 1;
        assert!(paren_flag(&d, 2, 0, 1));
        d.tokens[2].paren_depth = 0;
        d.tokens[4].paren_depth = 1;
        assert!(!paren_flag(&d, 2, 3, 4));
        d.tokens[3].paren_depth = 1;
        assert!(paren_flag(&d, 2, 3, 4));
    }

    #[test]
    fn similarity_identical_is_one() {
        let p = HashNgramEmbedder::default();
        let h = semantic_similarity("СД", &toks(&["СД"]), &p).unwrap();
        assert!((h - 1.0).abs() < 1e-12);
    }

    #[test]
    fn similarity_with_stub() {
        let stub = Stub(
            [
                ("A", vec![1.0, 0.0, 0.0]),
                ("x", vec![0.0, 1.0, 0.0]),
                ("y", vec![0.0, 0.0, 2.0]),
                ("u", vec![1.0, 1.0, 0.0]),
                ("v1", vec![1.0, 0.0, 1.0]),
                ("v2", vec![0.0, 2.0, 1.0]),
            ]
            .into_iter()
            .collect(),
        );
        assert_eq!(semantic_similarity("A", &toks(&["x"]), &stub).unwrap(), 0.0);
        assert_eq!(semantic_similarity("A", &toks(&["x", "y"]), &stub).unwrap(), 0.0);
        // mean(v1, v2) = (0.5, 1, 1); cos(u, ·) = 1.5 / (sqrt(2) * 1.5) = 1/sqrt(2)
        let h = semantic_similarity("u", &toks(&["v1", "v2"]), &stub).unwrap();
        assert!((h - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        // Unknown text embeds to zero.
        assert_eq!(semantic_similarity("zzz", &toks(&["x"]), &stub).unwrap(), 0.0);
    }

    #[test]
    fn similarity_dim_mismatch() {
        assert!(matches!(
            semantic_similarity("A", &toks(&["x"]), &BadDim),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn lcs_examples() {
        assert_eq!(lcs_chars("abc", "aXbYc"), 3);
        assert_eq!(lcs_chars("abc", "xyz"), 0);
        assert_eq!(lcs_chars("", "xyz"), 0);
        assert_eq!(lcs_length("СД", &toks(&["сахарный", "диабет"])), 2);
    }

    #[test]
    fn embedder_normalized_and_deterministic() {
        let p = HashNgramEmbedder::default();
        let a = p.embed("диабет");
        assert_eq!(a, p.embed("диабет"));
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(a, p.embed("ДИАБЕТ"));
        assert!(a.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn embedding_table() {
        let t = EmbeddingTable::from_reader_text("СД\t1 0\nсахарный\t1 1\n").unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.embed("СД"), vec![1.0, 0.0]);
        assert_eq!(t.embed("Сахарный"), vec![1.0, 1.0]);
        assert_eq!(t.embed("нет"), vec![0.0, 0.0]);
        assert_eq!(t.misses(), 1);
        assert!(EmbeddingTable::from_reader_text("a\t1 2\nb\t1\n").is_err());
        assert!(EmbeddingTable::from_reader_text("a 1 2\n").is_err());
    }

    #[test]
    fn gold_pair_features() {
        let mut d = Document::new("d", toks(&["сахарный", "диабет", "СД"]));
        d.tokens[2].paren_depth = 1;
        let c = CandidateDefinition {
            abbrev_index: 2,
            start: 0,
            end: 1,
            side: Side::Left,
        };
        let f = extract_pair_features(&d, &c, &HashNgramEmbedder::default()).unwrap();
        assert_eq!(f.distance, 1);
        assert_eq!(f.first_letter_matches, 2);
        assert!(f.paren_flag);
        assert_eq!(f.lcs_len, 2);
        let v = f.to_vector();
        assert_eq!(v.len(), PAIR_DIM);
        assert!(v.iter().all(|x| x.is_finite()));
    }

    /// Exponential reference: longest subsequence of `a` that is also a
    /// subsequence of `b`.
    fn lcs_brute(a: &[char], b: &[char]) -> usize {
        fn is_subseq(s: &[char], b: &[char]) -> bool {
            let mut it = b.iter();
            s.iter().all(|c| it.any(|x| x == c))
        }
        let mut best = 0;
        for mask in 0u32..(1 << a.len()) {
            let sub: Vec<char> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| a[i]).collect();
            if sub.len() > best && is_subseq(&sub, b) {
                best = sub.len();
            }
        }
        best
    }

    proptest! {
        #[test]
        fn lcs_matches_brute_force(a in "[абвг]{0,10}", b in "[абвг]{0,10}") {
            let ac: Vec<char> = a.chars().collect();
            let bc: Vec<char> = b.chars().collect();
            prop_assert_eq!(lcs_chars(&a, &b), lcs_brute(&ac, &bc));
            prop_assert_eq!(lcs_chars(&a, &b), lcs_chars(&b, &a));
            prop_assert!(lcs_chars(&a, &b) <= ac.len().min(bc.len()));
        }

        #[test]
        fn similarity_in_range(a in "[а-яA-Z]{1,6}", words in prop::collection::vec("[а-я]{1,8}", 1..4)) {
            let span: Vec<Token> = words.iter().map(|w| Token::new(w.clone())).collect();
            let h = semantic_similarity(&a, &span, &HashNgramEmbedder::default()).unwrap();
            prop_assert!((-1.0..=1.0).contains(&h));
        }

        #[test]
        fn distance_mirror_symmetry(a in 0usize..50, gap in 1usize..10, len in 1usize..6) {
            // Span to the right of `a`, then the mirrored layout to its left.
            let n = 200;
            let (s, e) = (a + gap, a + gap + len - 1);
            let (ma, ms, me) = (n - a, n - e, n - s);
            prop_assert_eq!(pair_distance(a, s, e).unwrap(), pair_distance(ma, ms, me).unwrap());
            prop_assert_eq!(pair_distance(a, s, e).unwrap(), gap);
        }

        #[test]
        fn first_letter_bound(a in "[абв]{1,6}", words in prop::collection::vec("[абв]{1,4}", 1..6)) {
            let span: Vec<Token> = words.iter().map(|w| Token::new(w.clone())).collect();
            prop_assert!(first_letter_matches(&a, &span) <= a.chars().count());
        }

        #[test]
        fn self_cosine_is_one(text in "\\PC{1,20}") {
            let p = HashNgramEmbedder::default();
            let v = p.embed(&text);
            if v.iter().any(|&x| x != 0.0) {
                prop_assert!((cosine(&v, &v) - 1.0).abs() < 1e-9);
            }
        }
    }
}
