//! Stage two: matching abbreviations to in-text definitions.
//!
//! Candidate spans from [`crate::candgen`] are turned into pair features and
//! scored by a binary matcher. During training the abbreviation occurrences
//! come from the gold labels; at inference they come from the detector.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candgen::{generate_candidates, CandidateDefinition, CandidateRuleConfig};
use crate::corpus::{Corpus, Document};
use crate::detect::{detect, DetectorModel};
use crate::error::{Error, Result};
use crate::matchfeat::{extract_pair_features, EmbeddingProvider, PairFeatures};
use crate::ml::{self, Classifier, Dataset, ModelFile, ModelKind, TrainConfig};
use crate::textprep::Dictionary;

pub const MATCHER_MODEL_TYPE: &str = "matcher";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairExample {
    pub doc_id: String,
    pub candidate: CandidateDefinition,
    pub features: PairFeatures,
    /// The span equals a gold definition span of this occurrence.
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDataset {
    pub examples: Vec<PairExample>,
    /// Gold pairs over the considered occurrences.
    pub gold_pairs: usize,
    /// Gold pairs whose span was among the generated candidates.
    pub gold_pairs_generated: usize,
}

impl PairDataset {
    pub fn generation_recall(&self) -> f64 {
        if self.gold_pairs == 0 {
            0.0
        } else {
            self.gold_pairs_generated as f64 / self.gold_pairs as f64
        }
    }

    pub fn positives(&self) -> usize {
        self.examples.iter().filter(|e| e.label).count()
    }

    pub fn to_dataset(&self) -> Dataset {
        Dataset {
            x: self.examples.iter().map(|e| e.features.to_vector()).collect(),
            y: self.examples.iter().map(|e| e.label).collect(),
            weights: None,
        }
    }
}

fn is_gold(doc: &Document, cand: &CandidateDefinition) -> bool {
    doc.gold_spans_for(cand.abbrev_index)
        .any(|span| span == (cand.start, cand.end))
}

/// Candidates, features and gold labels for the given occurrences of one
/// document.
pub fn pair_examples(
    doc: &Document,
    abbrev_indices: &[usize],
    rules: &CandidateRuleConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<PairExample>> {
    let mut out = Vec::new();
    for &a in abbrev_indices {
        for cand in generate_candidates(doc, a, rules) {
            out.push(PairExample {
                doc_id: doc.doc_id.clone(),
                features: extract_pair_features(doc, &cand, provider)?,
                label: is_gold(doc, &cand),
                candidate: cand,
            });
        }
    }
    Ok(out)
}

fn count_gold(doc: &Document, abbrev_indices: &[usize], examples: &[PairExample]) -> (usize, usize) {
    let mut total = 0;
    let mut generated = 0;
    for gp in &doc.gold_pairs {
        if !abbrev_indices.contains(&gp.abbrev_index) {
            continue;
        }
        total += 1;
        if examples.iter().any(|e| {
            e.candidate.abbrev_index == gp.abbrev_index
                && (e.candidate.start, e.candidate.end) == (gp.def_start, gp.def_end)
        }) {
            generated += 1;
        }
    }
    (total, generated)
}

/// Pair examples for every gold-labeled abbreviation occurrence.
pub fn build_pair_dataset(
    corpus: &Corpus,
    rules: &CandidateRuleConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<PairDataset> {
    rules.validate()?;
    let per_doc: Vec<(Vec<PairExample>, usize, usize)> = corpus
        .documents
        .par_iter()
        .map(|doc| {
            let abbrevs = doc.gold_abbrev_indices();
            let ex = pair_examples(doc, &abbrevs, rules, provider)?;
            let (t, g) = count_gold(doc, &abbrevs, &ex);
            Ok((ex, t, g))
        })
        .collect::<Result<_>>()?;
    let mut ds = PairDataset {
        examples: Vec::new(),
        gold_pairs: 0,
        gold_pairs_generated: 0,
    };
    for (ex, t, g) in per_doc {
        ds.examples.extend(ex);
        ds.gold_pairs += t;
        ds.gold_pairs_generated += g;
    }
    if ds.examples.is_empty() {
        log::warn!("no candidate pairs were generated");
    }
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherConfig {
    pub model: ModelKind,
    pub train: TrainConfig,
    pub class_weighting: bool,
    pub threshold: f64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            model: ModelKind::Forest,
            train: TrainConfig::default(),
            class_weighting: false,
            threshold: ml::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatcherModel {
    pub kind: ModelKind,
    pub model: Classifier,
    #[serde(skip)]
    pub threshold: f64,
}

impl MatcherModel {
    pub fn score(&self, features: &PairFeatures) -> Result<f64> {
        self.model.predict_score(&features.to_vector())
    }

    pub fn to_json(&self) -> Result<String> {
        self.to_json_with_config(None)
    }

    pub fn to_json_with_config(&self, config: Option<serde_json::Value>) -> Result<String> {
        ModelFile::new(MATCHER_MODEL_TYPE, self.threshold, self)
            .with_config(config)
            .to_json()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile<MatcherModel> = ModelFile::from_json(text, &[MATCHER_MODEL_TYPE])?;
        let mut m = file.payload;
        m.threshold = file.threshold;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Trains a forest or boosting matcher on the 5-dim pair vectors.
pub fn train_matcher(examples: &PairDataset, cfg: &MatcherConfig) -> Result<MatcherModel> {
    if cfg.model == ModelKind::Svm {
        return Err(Error::Config("matcher must be forest or boosting".into()));
    }
    let data = examples.to_dataset();
    data.require_both_classes()?;
    let data = if cfg.class_weighting {
        data.with_balanced_weights()
    } else {
        data
    };
    Ok(MatcherModel {
        kind: cfg.model,
        model: ml::train(cfg.model, &data, &cfg.train)?,
        threshold: cfg.threshold,
    })
}

/// One generated pair with its matcher decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub candidate: CandidateDefinition,
    pub features: PairFeatures,
    pub score: f64,
    pub accepted: bool,
    /// Highest-scoring accepted pair of its occurrence.
    pub best: bool,
    /// Gold label, false when the document has no annotation for it.
    pub gold: bool,
}

/// Pipeline output for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentResult {
    pub doc_id: String,
    pub abbreviations: Vec<usize>,
    /// Every generated pair in candidate order.
    pub pairs: Vec<ScoredPair>,
    /// Gold pairs over the considered occurrences.
    pub gold_pairs: usize,
    pub gold_pairs_generated: usize,
}

impl DocumentResult {
    pub fn accepted(&self) -> impl Iterator<Item = &ScoredPair> {
        self.pairs.iter().filter(|p| p.accepted)
    }

    /// Occurrences without any accepted pair.
    pub fn unresolved(&self) -> Vec<usize> {
        self.abbreviations
            .iter()
            .copied()
            .filter(|&a| !self.pairs.iter().any(|p| p.accepted && p.candidate.abbrev_index == a))
            .collect()
    }
}

/// Marks the best accepted pair per occurrence: highest score, then
/// smallest distance, then leftmost start.
fn flag_best(pairs: &mut [ScoredPair]) {
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        if !p.accepted {
            continue;
        }
        let a = p.candidate.abbrev_index;
        let better = match best.get(&a) {
            None => true,
            Some(&j) => {
                let q = &pairs[j];
                p.score > q.score
                    || (p.score == q.score
                        && (p.features.distance, p.candidate.start)
                            < (q.features.distance, q.candidate.start))
            }
        };
        if better {
            best.insert(a, i);
        }
    }
    for i in best.into_values() {
        pairs[i].best = true;
    }
}

/// Generates, scores and accepts pairs for the given occurrences.
pub fn resolve_abbreviations(
    doc: &Document,
    abbreviations: Vec<usize>,
    matcher: &MatcherModel,
    rules: &CandidateRuleConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<DocumentResult> {
    let examples = pair_examples(doc, &abbreviations, rules, provider)?;
    let (gold_pairs, gold_pairs_generated) = count_gold(doc, &abbreviations, &examples);
    let mut pairs = examples
        .into_iter()
        .map(|e| {
            let score = matcher.score(&e.features)?;
            Ok(ScoredPair {
                candidate: e.candidate,
                features: e.features,
                score,
                accepted: score >= matcher.threshold,
                best: false,
                gold: e.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    flag_best(&mut pairs);
    Ok(DocumentResult {
        doc_id: doc.doc_id.clone(),
        abbreviations,
        pairs,
        gold_pairs,
        gold_pairs_generated,
    })
}

/// Full pipeline on one document: detect, generate, featurize, classify.
pub fn identify(
    doc: &Document,
    detector: &DetectorModel,
    matcher: &MatcherModel,
    rules: &CandidateRuleConfig,
    provider: &dyn EmbeddingProvider,
    dict: &Dictionary,
) -> Result<DocumentResult> {
    let detected: Vec<usize> = detect(detector, doc, dict)?.into_iter().collect();
    resolve_abbreviations(doc, detected, matcher, rules, provider)
}

/// Where stage two takes its abbreviation occurrences from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbbrevSource {
    #[default]
    Detected,
    Gold,
}

/// Runs stage two over a corpus, documents in parallel, results in corpus order.
pub fn identify_corpus(
    corpus: &Corpus,
    detector: Option<&DetectorModel>,
    matcher: &MatcherModel,
    rules: &CandidateRuleConfig,
    provider: &dyn EmbeddingProvider,
    dict: &Dictionary,
    source: AbbrevSource,
) -> Result<Vec<DocumentResult>> {
    rules.validate()?;
    if source == AbbrevSource::Detected && detector.is_none() {
        return Err(Error::Config(
            "detected abbreviations requested but no detector supplied".into(),
        ));
    }
    corpus
        .documents
        .par_iter()
        .map(|doc| match (source, detector) {
            (AbbrevSource::Detected, Some(det)) => identify(doc, det, matcher, rules, provider, dict),
            _ => resolve_abbreviations(doc, doc.gold_abbrev_indices(), matcher, rules, provider),
        })
        .collect()
}

/// One accepted pair as written by the `identify` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub doc_id: String,
    pub abbrev_index: usize,
    pub abbrev_text: String,
    pub start: usize,
    pub end: usize,
    pub definition_text: String,
    pub score: f64,
    pub best: bool,
}

pub fn pair_records(doc: &Document, result: &DocumentResult) -> Vec<PairRecord> {
    result
        .accepted()
        .map(|p| PairRecord {
            doc_id: doc.doc_id.clone(),
            abbrev_index: p.candidate.abbrev_index,
            abbrev_text: doc.tokens[p.candidate.abbrev_index].text.clone(),
            start: p.candidate.start,
            end: p.candidate.end,
            definition_text: doc.span_text(p.candidate.start, p.candidate.end),
            score: p.score,
            best: p.best,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candgen::Side;
    use crate::corpus::{GoldPair, Token};
    use crate::matchfeat::HashNgramEmbedder;
    use crate::ml::{TreeModel, TreeNode};

    fn gold_doc() -> Document {
        let mut d = Document::new(
            "g",
            ["сахарный", "диабет", "СД", "лечение", "инсулином"]
                .iter()
                .map(|w| Token::new(*w))
                .collect(),
        );
        d.tokens[2].is_abbrev = true;
        d.tokens[2].paren_depth = 1;
        d.gold_pairs.push(GoldPair {
            abbrev_index: 2,
            def_start: 0,
            def_end: 1,
        });
        d
    }

    fn constant_matcher(score: f64) -> MatcherModel {
        MatcherModel {
            kind: ModelKind::Forest,
            model: Classifier::Tree(TreeModel {
                n_features: 5,
                root: TreeNode::Leaf { leaf: score },
            }),
            threshold: 0.5,
        }
    }

    /// Scores by negative distance: closer spans score higher.
    fn distance_matcher() -> MatcherModel {
        MatcherModel {
            kind: ModelKind::Forest,
            model: Classifier::Tree(TreeModel {
                n_features: 5,
                root: TreeNode::Split {
                    feature: 0,
                    threshold: 1.5,
                    left: Box::new(TreeNode::Leaf { leaf: 0.9 }),
                    right: Box::new(TreeNode::Leaf { leaf: 0.6 }),
                },
            }),
            threshold: 0.5,
        }
    }

    #[test]
    fn gold_span_labeled_positive() {
        let c = Corpus::new(vec![gold_doc()]).unwrap();
        let ds = build_pair_dataset(&c, &CandidateRuleConfig::default(), &HashNgramEmbedder::default())
            .unwrap();
        assert_eq!(ds.positives(), 1);
        assert_eq!(ds.gold_pairs, 1);
        assert_eq!(ds.generation_recall(), 1.0);
        let pos = ds.examples.iter().find(|e| e.label).unwrap();
        assert_eq!((pos.candidate.start, pos.candidate.end), (0, 1));
    }

    #[test]
    fn overlong_gold_span_not_generated() {
        // "СД" allows at most 4 tokens; the gold span has 5.
        let words = ["сахарный", "очень", "долгий", "длинный", "диабет", "СД"];
        let mut d = Document::new("g", words.iter().map(|w| Token::new(*w)).collect());
        d.tokens[5].is_abbrev = true;
        d.gold_pairs.push(GoldPair {
            abbrev_index: 5,
            def_start: 0,
            def_end: 4,
        });
        let c = Corpus::new(vec![d]).unwrap();
        let ds = build_pair_dataset(&c, &CandidateRuleConfig::default(), &HashNgramEmbedder::default())
            .unwrap();
        assert_eq!(ds.positives(), 0);
        assert_eq!(ds.gold_pairs, 1);
        assert_eq!(ds.generation_recall(), 0.0);
    }

    #[test]
    fn empty_abbreviations_give_no_pairs() {
        let r = resolve_abbreviations(
            &gold_doc(),
            vec![],
            &constant_matcher(1.0),
            &CandidateRuleConfig::default(),
            &HashNgramEmbedder::default(),
        )
        .unwrap();
        assert!(r.pairs.is_empty());
        assert!(r.unresolved().is_empty());
    }

    #[test]
    fn single_positive_is_best() {
        let mut d = gold_doc();
        d.tokens.truncate(3);
        let r = resolve_abbreviations(
            &d,
            vec![2],
            &constant_matcher(0.8),
            &CandidateRuleConfig::default(),
            &HashNgramEmbedder::default(),
        )
        .unwrap();
        let accepted: Vec<_> = r.accepted().collect();
        assert_eq!(accepted.len(), 1);
        assert!(accepted[0].best);
        assert!(accepted[0].gold);
    }

    #[test]
    fn best_prefers_score_then_distance() {
        // Two spans for "СД": (0,1) at distance 1 and (3,4) at distance 2... plus
        // spans further left. The distance matcher scores distance-1 spans higher.
        let words = ["сахарный", "диабет", "СД", "стойкий", "дефицит"];
        let d = Document::new("t", words.iter().map(|w| Token::new(*w)).collect());
        let r = resolve_abbreviations(
            &d,
            vec![2],
            &distance_matcher(),
            &CandidateRuleConfig::default(),
            &HashNgramEmbedder::default(),
        )
        .unwrap();
        let best: Vec<_> = r.pairs.iter().filter(|p| p.best).collect();
        assert_eq!(best.len(), 1);
        assert_eq!(best[0].features.distance, 1);
        // (0,1) and (3,4) both sit at distance 1 with equal scores: leftmost wins.
        assert_eq!(best[0].candidate.span(), (0, 1));

        let r = resolve_abbreviations(
            &d,
            vec![2],
            &constant_matcher(0.7),
            &CandidateRuleConfig::default(),
            &HashNgramEmbedder::default(),
        )
        .unwrap();
        let best: Vec<_> = r.pairs.iter().filter(|p| p.best).collect();
        assert_eq!(best.len(), 1);
        assert_eq!(best[0].features.distance, 1);
        assert_eq!(best[0].candidate.start, 0);
    }

    #[test]
    fn flag_best_on_hand_built_pairs() {
        let mk = |start, end, distance, score| ScoredPair {
            candidate: CandidateDefinition {
                abbrev_index: 10,
                start,
                end,
                side: Side::Left,
            },
            features: PairFeatures {
                distance,
                first_letter_matches: 0,
                paren_flag: false,
                semantic_sim: 0.0,
                lcs_len: 0,
            },
            score,
            accepted: score >= 0.5,
            best: false,
            gold: false,
        };
        let mut pairs = vec![mk(2, 4, 6, 0.8), mk(5, 8, 2, 0.9), mk(6, 8, 2, 0.3)];
        flag_best(&mut pairs);
        assert_eq!(pairs.iter().map(|p| p.best).collect::<Vec<_>>(), [false, true, false]);

        let mut pairs = vec![mk(2, 4, 6, 0.9), mk(5, 8, 2, 0.9)];
        flag_best(&mut pairs);
        assert_eq!(pairs.iter().map(|p| p.best).collect::<Vec<_>>(), [false, true]);
    }

    #[test]
    fn matcher_requires_both_labels() {
        let c = Corpus::new(vec![gold_doc()]).unwrap();
        let mut ds = build_pair_dataset(&c, &CandidateRuleConfig::default(), &HashNgramEmbedder::default())
            .unwrap();
        ds.examples.retain(|e| !e.label);
        assert!(matches!(
            train_matcher(&ds, &MatcherConfig::default()),
            Err(Error::SingleClass { .. }) | Err(Error::EmptyData)
        ));
    }

    #[test]
    fn matcher_roundtrip() {
        let m = constant_matcher(0.7);
        let back = MatcherModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn records_carry_text() {
        let r = resolve_abbreviations(
            &gold_doc(),
            vec![2],
            &constant_matcher(0.9),
            &CandidateRuleConfig::default(),
            &HashNgramEmbedder::default(),
        )
        .unwrap();
        let recs = pair_records(&gold_doc(), &r);
        let best = recs.iter().find(|r| r.best).unwrap();
        assert_eq!(best.abbrev_text, "СД");
        assert_eq!(best.definition_text, "сахарный диабет");
    }
}
