//! Stage one: token-level abbreviation detection.
//!
//! Seven token-internal features are extracted per token and one-hot encoded
//! into a 12-dimensional vector. The detector is a committee of any subset of
//! {SVM, forest, boosting}; a token is an abbreviation when at least one
//! member says so.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Token, TokenRef};
use crate::error::{Error, Result};
use crate::ml::{self, Classifier, Dataset, ModelFile, ModelKind, TrainConfig};
use crate::textprep::{Dictionary, TokenizerConfig};

pub const DETECTOR_MODEL_TYPE: &str = "detector";

/// Names of the seven detection features, in vector order.
pub const DETECTION_FEATURE_NAMES: [&str; 7] = [
    "special_characters",
    "letters_digits_composition",
    "vowels_consonants_composition",
    "length",
    "capital_letters_pct",
    "internal_capital",
    "in_dictionary",
];

/// Names of the 12 vector dimensions.
pub const DETECTION_VECTOR_NAMES: [&str; DETECTION_DIM] = [
    "has_special",
    "chars_letters_only",
    "chars_digits_only",
    "chars_mixed",
    "letters_vowels_only",
    "letters_consonants_only",
    "letters_mixed",
    "letters_none",
    "length",
    "capital_pct",
    "internal_capital",
    "in_dict",
];

/// Feature (index into [`DETECTION_FEATURE_NAMES`]) that each dimension encodes.
pub const DETECTION_DIM_FEATURE: [usize; DETECTION_DIM] = [0, 1, 1, 1, 2, 2, 2, 2, 3, 4, 5, 6];

pub const DETECTION_DIM: usize = 12;

/// Letters and digits present in a token. A token with neither counts as mixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharComposition {
    LettersOnly,
    DigitsOnly,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LetterComposition {
    VowelsOnly,
    ConsonantsOnly,
    Mixed,
    NoLetters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFeatures {
    pub has_special: bool,
    pub char_composition: CharComposition,
    pub letter_composition: LetterComposition,
    /// Characters, not bytes.
    pub length: usize,
    /// Uppercase letters over all letters; 0 without letters.
    pub capital_pct: f64,
    /// An uppercase letter somewhere after the first character.
    pub internal_capital: bool,
    pub in_dict: bool,
}

pub fn extract_detection_features(
    token: &Token,
    dict: &Dictionary,
    cfg: &TokenizerConfig,
) -> DetectionFeatures {
    features_of_text(&token.text, dict, &cfg.vowels)
}

fn features_of_text(text: &str, dict: &Dictionary, vowels: &BTreeSet<char>) -> DetectionFeatures {
    let mut letters = 0usize;
    let mut digits = 0usize;
    let mut upper = 0usize;
    let mut vowel_count = 0usize;
    let mut has_special = false;
    let mut internal_capital = false;
    let mut length = 0usize;
    for (i, c) in text.chars().enumerate() {
        length += 1;
        if c.is_alphabetic() {
            letters += 1;
            if c.is_uppercase() {
                upper += 1;
                if i > 0 {
                    internal_capital = true;
                }
            }
            if c.to_lowercase().all(|l| vowels.contains(&l)) {
                vowel_count += 1;
            }
        } else if c.is_numeric() {
            digits += 1;
        } else {
            has_special = true;
        }
    }
    let char_composition = match (letters > 0, digits > 0) {
        (true, false) => CharComposition::LettersOnly,
        (false, true) => CharComposition::DigitsOnly,
        _ => CharComposition::Mixed,
    };
    let letter_composition = if letters == 0 {
        LetterComposition::NoLetters
    } else if vowel_count == letters {
        LetterComposition::VowelsOnly
    } else if vowel_count == 0 {
        LetterComposition::ConsonantsOnly
    } else {
        LetterComposition::Mixed
    };
    DetectionFeatures {
        has_special,
        char_composition,
        letter_composition,
        length,
        capital_pct: if letters == 0 {
            0.0
        } else {
            upper as f64 / letters as f64
        },
        internal_capital,
        in_dict: dict.contains(text),
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Fixed layout, see [`DETECTION_VECTOR_NAMES`].
pub fn vectorize_detection(f: &DetectionFeatures) -> Vec<f64> {
    let mut v = vec![0.0; DETECTION_DIM];
    v[0] = flag(f.has_special);
    v[1 + match f.char_composition {
        CharComposition::LettersOnly => 0,
        CharComposition::DigitsOnly => 1,
        CharComposition::Mixed => 2,
    }] = 1.0;
    v[4 + match f.letter_composition {
        LetterComposition::VowelsOnly => 0,
        LetterComposition::ConsonantsOnly => 1,
        LetterComposition::Mixed => 2,
        LetterComposition::NoLetters => 3,
    }] = 1.0;
    v[8] = f.length as f64;
    v[9] = f.capital_pct;
    v[10] = flag(f.internal_capital);
    v[11] = flag(f.in_dict);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub members: Vec<ModelKind>,
    pub train: TrainConfig,
    /// Reweight classes to equal total mass.
    pub class_weighting: bool,
    pub threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            members: ModelKind::ALL.to_vec(),
            train: TrainConfig::default(),
            class_weighting: false,
            threshold: ml::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorMember {
    pub kind: ModelKind,
    pub model: Classifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub members: Vec<DetectorMember>,
    /// Vowel set used for feature extraction at training time.
    pub vowels: BTreeSet<char>,
    #[serde(skip)]
    pub threshold: f64,
}

/// Per-token detector output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDecision {
    pub index: usize,
    pub member_scores: Vec<f64>,
    pub member_labels: Vec<bool>,
    /// Max over members.
    pub score: f64,
    /// OR over members.
    pub positive: bool,
}

impl DetectorModel {
    pub fn features(&self, token: &Token, dict: &Dictionary) -> Vec<f64> {
        vectorize_detection(&features_of_text(&token.text, dict, &self.vowels))
    }

    pub fn decide(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<bool>)> {
        let mut scores = Vec::with_capacity(self.members.len());
        let mut labels = Vec::with_capacity(self.members.len());
        for m in &self.members {
            let s = m.model.predict_score(x)?;
            scores.push(s);
            labels.push(s >= self.threshold);
        }
        Ok((scores, labels))
    }

    /// Decisions for every token of a document.
    pub fn decide_document(&self, doc: &Document, dict: &Dictionary) -> Result<Vec<TokenDecision>> {
        doc.tokens
            .iter()
            .enumerate()
            .map(|(index, tok)| {
                let (member_scores, member_labels) = self.decide(&self.features(tok, dict))?;
                let score = member_scores.iter().copied().fold(0.0, f64::max);
                let positive = member_labels.iter().any(|&l| l);
                Ok(TokenDecision {
                    index,
                    member_scores,
                    member_labels,
                    score,
                    positive,
                })
            })
            .collect()
    }

    /// A detector made of the named members only, in this model's order.
    pub fn restricted_to(&self, kinds: &[ModelKind]) -> DetectorModel {
        DetectorModel {
            members: self
                .members
                .iter()
                .filter(|m| kinds.contains(&m.kind))
                .cloned()
                .collect(),
            vowels: self.vowels.clone(),
            threshold: self.threshold,
        }
    }

    pub fn kinds(&self) -> Vec<ModelKind> {
        self.members.iter().map(|m| m.kind).collect()
    }

    pub fn member(&self, kind: ModelKind) -> Option<&Classifier> {
        self.members.iter().find(|m| m.kind == kind).map(|m| &m.model)
    }

    pub fn to_json(&self) -> Result<String> {
        self.to_json_with_config(None)
    }

    pub fn to_json_with_config(&self, config: Option<serde_json::Value>) -> Result<String> {
        ModelFile::new(DETECTOR_MODEL_TYPE, self.threshold, self)
            .with_config(config)
            .to_json()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile<DetectorModel> = ModelFile::from_json(text, &[DETECTOR_MODEL_TYPE])?;
        let mut model = file.payload;
        model.threshold = file.threshold;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Vectors and gold labels for every token in the corpus.
pub fn detection_dataset(corpus: &Corpus, dict: &Dictionary, cfg: &TokenizerConfig) -> Dataset {
    let mut x = Vec::with_capacity(corpus.token_count());
    let mut y = Vec::with_capacity(corpus.token_count());
    for doc in &corpus.documents {
        for tok in &doc.tokens {
            x.push(vectorize_detection(&extract_detection_features(tok, dict, cfg)));
            y.push(tok.is_abbrev);
        }
    }
    Dataset { x, y, weights: None }
}

/// Like [`detection_dataset`] but over selected tokens.
pub fn detection_dataset_for(
    corpus: &Corpus,
    refs: &[TokenRef],
    dict: &Dictionary,
    cfg: &TokenizerConfig,
) -> Dataset {
    let mut x = Vec::with_capacity(refs.len());
    let mut y = Vec::with_capacity(refs.len());
    for &(d, t) in refs {
        let tok = &corpus.documents[d].tokens[t];
        x.push(vectorize_detection(&extract_detection_features(tok, dict, cfg)));
        y.push(tok.is_abbrev);
    }
    Dataset { x, y, weights: None }
}

pub fn train_detector(
    train: &Corpus,
    dict: &Dictionary,
    tok_cfg: &TokenizerConfig,
    cfg: &DetectorConfig,
) -> Result<DetectorModel> {
    train_detector_on(detection_dataset(train, dict, tok_cfg), tok_cfg, cfg)
}

/// Trains each configured member on an already vectorized dataset.
pub fn train_detector_on(
    data: Dataset,
    tok_cfg: &TokenizerConfig,
    cfg: &DetectorConfig,
) -> Result<DetectorModel> {
    if cfg.members.is_empty() {
        return Err(Error::Config("detector needs at least one member".into()));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = cfg.members.iter().find(|k| !seen.insert(**k)) {
        return Err(Error::Config(format!("duplicate detector member {dup}")));
    }
    data.require_both_classes()?;
    let data = if cfg.class_weighting {
        data.with_balanced_weights()
    } else {
        data
    };
    let members = cfg
        .members
        .iter()
        .map(|&kind| {
            log::debug!("training detector member {kind}");
            Ok(DetectorMember {
                kind,
                model: ml::train(kind, &data, &cfg.train)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DetectorModel {
        members,
        vowels: tok_cfg.vowels.clone(),
        threshold: cfg.threshold,
    })
}

/// Indices of tokens flagged by at least one member.
pub fn detect(model: &DetectorModel, doc: &Document, dict: &Dictionary) -> Result<BTreeSet<usize>> {
    Ok(model
        .decide_document(doc, dict)?
        .into_iter()
        .filter(|d| d.positive)
        .map(|d| d.index)
        .collect())
}

/// Sums the 12 per-dimension importances into the seven named features.
pub fn aggregate_detection_importances(per_dim: &[f64]) -> Vec<(String, f64)> {
    let mut out = vec![0.0; DETECTION_FEATURE_NAMES.len()];
    for (dim, &v) in per_dim.iter().enumerate() {
        out[DETECTION_DIM_FEATURE[dim]] += v;
    }
    DETECTION_FEATURE_NAMES
        .iter()
        .zip(out)
        .map(|(n, v)| (n.to_string(), v))
        .collect()
}
