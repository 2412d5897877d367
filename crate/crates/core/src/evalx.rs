//! Metrics and evaluation reports for both stages.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TokenRef};
use crate::detect::{aggregate_detection_importances, DetectorModel};
use crate::error::{Error, Result};
use crate::identify::{DocumentResult, MatcherModel};
use crate::matchfeat::PAIR_FEATURE_NAMES;
use crate::textprep::Dictionary;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_labels(predicted: &[bool], gold: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&p, &g) in predicted.iter().zip(gold) {
            c.add(p, g);
        }
        c
    }

    pub fn add(&mut self, predicted: bool, gold: bool) {
        match (predicted, gold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// `2tp / (2tp + fp + fn)`; 0 when undefined.
pub fn f1(c: &Confusion) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        log::warn!("f1 undefined for {c:?}, reporting 0");
        return 0.0;
    }
    2.0 * c.tp as f64 / denom as f64
}

/// `(tp + tn) / total`; 0 when there are no items.
pub fn accuracy(c: &Confusion) -> f64 {
    let total = c.total();
    if total == 0 {
        log::warn!("accuracy undefined for an empty confusion, reporting 0");
        return 0.0;
    }
    (c.tp + c.tn) as f64 / total as f64
}

pub fn precision(c: &Confusion) -> f64 {
    if c.tp + c.fp == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fp) as f64
    }
}

pub fn recall(c: &Confusion) -> f64 {
    if c.tp + c.fn_ == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fn_) as f64
    }
}

/// Mann-Whitney ROC AUC, ties counted as one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass {
            positives,
            negatives,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of positive ranks, with 2x ranks to stay in integers.
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their mean, (i + j + 2) / 2.
        let mean2 = (i + j + 2) as u64;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count() as u64;
        rank_sum2 += mean2 * pos_in_group;
        i = j + 1;
    }
    let p = positives as u64;
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2.0 * positives as f64 * negatives as f64))
}

/// One report line, serialized flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    /// `None` when the evaluated labels have a single class.
    pub roc_auc: Option<f64>,
    pub accuracy: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl MetricsRow {
    pub fn new(model: impl Into<String>, scores: &[f64], predicted: &[bool], gold: &[bool]) -> Self {
        let model = model.into();
        let c = Confusion::from_labels(predicted, gold);
        let roc_auc = match roc_auc(scores, gold) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("{model}: ROC AUC not reported: {e}");
                None
            }
        };
        MetricsRow {
            model,
            roc_auc,
            accuracy: accuracy(&c),
            f1: f1(&c),
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            tn: c.tn,
        }
    }

    pub fn confusion(&self) -> Confusion {
        Confusion {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            tn: self.tn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub stage: String,
    pub rows: Vec<MetricsRow>,
    /// Extra scalar statistics such as generation recall.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

impl MetricsReport {
    pub fn row(&self, model: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "stage: {}", self.stage);
        let _ = writeln!(
            out,
            "{:<10} {:>8} {:>8} {:>8} {:>7} {:>7} {:>7} {:>7}",
            "model", "roc_auc", "accuracy", "f1", "tp", "fp", "fn", "tn"
        );
        for r in &self.rows {
            let auc = r.roc_auc.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                out,
                "{:<10} {:>8} {:>8.4} {:>8.4} {:>7} {:>7} {:>7} {:>7}",
                r.model, auc, r.accuracy, r.f1, r.tp, r.fp, r.fn_, r.tn
            );
        }
        for (k, v) in &self.extra {
            let _ = writeln!(out, "{k}: {v:.4}");
        }
        out
    }
}

fn detection_report(
    model: &DetectorModel,
    corpus: &Corpus,
    refs: &mut dyn Iterator<Item = TokenRef>,
    dict: &Dictionary,
) -> Result<MetricsReport> {
    let k = model.members.len();
    let mut member_scores = vec![Vec::new(); k];
    let mut member_labels = vec![Vec::new(); k];
    let mut ens_scores = Vec::new();
    let mut ens_labels = Vec::new();
    let mut gold = Vec::new();
    for (d, t) in refs {
        let tok = &corpus.documents[d].tokens[t];
        let (scores, labels) = model.decide(&model.features(tok, dict))?;
        for m in 0..k {
            member_scores[m].push(scores[m]);
            member_labels[m].push(labels[m]);
        }
        ens_scores.push(scores.iter().copied().fold(0.0, f64::max));
        ens_labels.push(labels.iter().any(|&l| l));
        gold.push(tok.is_abbrev);
    }
    if gold.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut rows: Vec<MetricsRow> = model
        .members
        .iter()
        .enumerate()
        .map(|(m, member)| MetricsRow::new(member.kind.as_str(), &member_scores[m], &member_labels[m], &gold))
        .collect();
    rows.push(MetricsRow::new("ensemble", &ens_scores, &ens_labels, &gold));
    Ok(MetricsReport {
        stage: "detection".into(),
        rows,
        extra: BTreeMap::new(),
    })
}

/// Token-level detection metrics: one row per member plus the OR ensemble.
pub fn evaluate_detection(model: &DetectorModel, test: &Corpus, dict: &Dictionary) -> Result<MetricsReport> {
    let mut refs = test
        .documents
        .iter()
        .enumerate()
        .flat_map(|(d, doc)| (0..doc.tokens.len()).map(move |t| (d, t)));
    detection_report(model, test, &mut refs, dict)
}

/// Detection metrics over selected tokens.
pub fn evaluate_detection_refs(
    model: &DetectorModel,
    corpus: &Corpus,
    refs: &[TokenRef],
    dict: &Dictionary,
) -> Result<MetricsReport> {
    detection_report(model, corpus, &mut refs.iter().copied(), dict)
}

/// Pair-level identification metrics: every generated pair is one item.
pub fn evaluate_identification(
    results: &[DocumentResult],
    matcher: &MatcherModel,
) -> Result<MetricsReport> {
    let pairs = results.iter().flat_map(|r| r.pairs.iter());
    let scores: Vec<f64> = pairs.clone().map(|p| p.score).collect();
    let predicted: Vec<bool> = pairs.clone().map(|p| p.accepted).collect();
    let gold: Vec<bool> = pairs.map(|p| p.gold).collect();
    if gold.is_empty() {
        log::warn!("no pairs to evaluate");
    }
    let gold_pairs: usize = results.iter().map(|r| r.gold_pairs).sum();
    let generated: usize = results.iter().map(|r| r.gold_pairs_generated).sum();
    let mut extra = BTreeMap::new();
    extra.insert("pairs".into(), gold.len() as f64);
    extra.insert("gold_pairs".into(), gold_pairs as f64);
    if gold_pairs > 0 {
        extra.insert("generation_recall".into(), generated as f64 / gold_pairs as f64);
    }
    Ok(MetricsReport {
        stage: "identification".into(),
        rows: vec![MetricsRow::new(matcher.kind.as_str(), &scores, &predicted, &gold)],
        extra,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub name: String,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub stage: String,
    pub features: Vec<FeatureImportance>,
}

impl ImportanceReport {
    pub fn to_table(&self) -> String {
        let mut out = format!("stage: {}\n", self.stage);
        for f in &self.features {
            let _ = writeln!(out, "{:<30} {:.6}", f.name, f.importance);
        }
        out
    }

    fn from_pairs(stage: &str, pairs: Vec<(String, f64)>) -> Self {
        ImportanceReport {
            stage: stage.into(),
            features: pairs
                .into_iter()
                .map(|(name, importance)| FeatureImportance { name, importance })
                .collect(),
        }
    }
}

/// Forest importances of the detector, summed into the seven named features.
pub fn detection_importances(model: &DetectorModel) -> Result<ImportanceReport> {
    let forest = model
        .members
        .iter()
        .find_map(|m| m.model.as_forest())
        .ok_or_else(|| Error::Config("detector has no forest member".into()))?;
    Ok(ImportanceReport::from_pairs(
        "detection",
        aggregate_detection_importances(&forest.feature_importances),
    ))
}

pub fn identification_importances(matcher: &MatcherModel) -> Result<ImportanceReport> {
    let forest = matcher
        .model
        .as_forest()
        .ok_or_else(|| Error::Config("matcher is not a forest".into()))?;
    Ok(ImportanceReport::from_pairs(
        "identification",
        PAIR_FEATURE_NAMES
            .iter()
            .zip(&forest.feature_importances)
            .map(|(n, &v)| (n.to_string(), v))
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] && !labels[j] {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
    }

    #[test]
    fn auc_errors() {
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::SingleClass { .. })));
        assert!(matches!(roc_auc(&[0.1], &[true, false]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn reference_identification_counts() {
        let c = Confusion {
            tp: 6,
            fp: 4,
            fn_: 1,
            tn: 761,
        };
        assert_eq!(c.total(), 772);
        assert!((f1(&c) - 0.706).abs() < 1e-3);
        assert!((accuracy(&c) - 0.994).abs() < 1e-3);
    }

    #[test]
    fn degenerate_metrics_are_zero() {
        let c = Confusion::default();
        assert_eq!(f1(&c), 0.0);
        assert_eq!(accuracy(&c), 0.0);
    }

    #[test]
    fn constant_scores_give_half() {
        let row = MetricsRow::new("c", &[0.3; 4], &[false; 4], &[true, false, true, false]);
        assert_eq!(row.roc_auc, Some(0.5));
        assert_eq!(row.confusion().fn_, 2);
    }

    #[test]
    fn row_json_keys() {
        let row = MetricsRow::new("forest", &[0.9, 0.1], &[true, false], &[true, false]);
        let v = serde_json::to_value(&row).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        for k in ["model", "roc_auc", "accuracy", "f1", "tp", "fp", "fn", "tn"] {
            assert!(keys.contains(&k), "{k}");
        }
    }

    #[test]
    fn table_lists_rows() {
        let report = MetricsReport {
            stage: "detection".into(),
            rows: vec![MetricsRow::new("svm", &[0.9, 0.1], &[true, false], &[true, false])],
            extra: BTreeMap::new(),
        };
        let t = report.to_table();
        assert!(t.contains("svm"));
        assert!(t.contains("1.0000"));
    }

    fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec((0u8..6).prop_map(|v| v as f64 / 5.0), n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
        .prop_filter("both classes", |(_, l)| l.iter().any(|&b| b) && l.iter().any(|&b| !b))
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise((s, l) in scored()) {
            prop_assert!((roc_auc(&s, &l).unwrap() - brute_auc(&s, &l)).abs() < 1e-12);
        }

        #[test]
        fn auc_complement((s, l) in scored()) {
            let neg: Vec<bool> = l.iter().map(|b| !b).collect();
            let sum = roc_auc(&s, &l).unwrap() + roc_auc(&s, &neg).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn auc_monotone_invariant((s, l) in scored()) {
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            prop_assert_eq!(roc_auc(&s, &l).unwrap(), roc_auc(&t, &l).unwrap());
        }

        #[test]
        fn confusion_totals(p in prop::collection::vec(any::<bool>(), 0..50), seed in any::<u64>()) {
            let g: Vec<bool> = p.iter().enumerate().map(|(i, _)| (seed >> (i % 64)) & 1 == 1).collect();
            let c = Confusion::from_labels(&p, &g);
            prop_assert_eq!(c.total(), p.len());
            let manual = p.iter().zip(&g).filter(|(a, b)| **a && **b).count();
            prop_assert_eq!(c.tp, manual);
            let expect_f1 = if 2 * c.tp + c.fp + c.fn_ == 0 { 0.0 } else { 2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fn_) as f64 };
            prop_assert_eq!(f1(&c), expect_f1);
        }
    }
}
