//! Binary classifiers used by both pipeline stages.
//!
//! Everything here is trained from scratch and is deterministic for a fixed
//! [`TrainConfig::seed`]. Scores are always in `[0, 1]`; a label is positive
//! when its score reaches the decision threshold.

pub mod boosting;
pub mod forest;
pub mod persist;
pub mod svm;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use boosting::{train_boosting, BoostingMode, BoostingModel};
pub use forest::{train_forest, FeatureSampling, ForestModel};
pub use persist::{load_classifier, save_classifier, ModelFile, FORMAT_VERSION};
pub use svm::{train_svm, SvmModel};
pub use tree::{train_tree, TreeModel, TreeNode};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Labeled feature vectors with optional per-sample weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<bool>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if let Some(first) = x.first() {
            let d = first.len();
            if let Some(bad) = x.iter().find(|r| r.len() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: bad.len(),
                });
            }
        }
        Ok(Dataset {
            x,
            y,
            weights: None,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// (positives, negatives)
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.y.iter().filter(|&&l| l).count();
        (pos, self.y.len() - pos)
    }

    pub fn require_both_classes(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyData);
        }
        let (positives, negatives) = self.class_counts();
        if positives == 0 || negatives == 0 {
            return Err(Error::SingleClass {
                positives,
                negatives,
            });
        }
        Ok(())
    }

    /// Weights that give both classes equal total mass.
    pub fn with_balanced_weights(mut self) -> Self {
        let (pos, neg) = self.class_counts();
        let n = self.len() as f64;
        let wp = if pos > 0 { n / (2.0 * pos as f64) } else { 1.0 };
        let wn = if neg > 0 { n / (2.0 * neg as f64) } else { 1.0 };
        self.weights = Some(self.y.iter().map(|&l| if l { wp } else { wn }).collect());
        self
    }

    pub(crate) fn weight_vec(&self) -> Vec<f64> {
        self.weights.clone().unwrap_or_else(|| vec![1.0; self.len()])
    }
}

/// Hyperparameters shared by all classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub n_trees: usize,
    /// `None` grows forest trees until another stopping rule applies.
    pub forest_max_depth: Option<usize>,
    pub boosting_max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub boosting_rounds: usize,
    pub learning_rate: f64,
    pub boosting_mode: BoostingMode,
    pub feature_sampling: FeatureSampling,
    pub svm_epochs: usize,
    pub svm_regularization: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            n_trees: 100,
            forest_max_depth: None,
            boosting_max_depth: 3,
            min_samples_split: 2,
            min_samples_leaf: 1,
            boosting_rounds: 100,
            learning_rate: 0.1,
            boosting_mode: BoostingMode::Gradient,
            feature_sampling: FeatureSampling::PerTree,
            svm_epochs: 300,
            svm_regularization: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_leaf < 1 {
            return Err(Error::Config("min_samples_leaf must be >= 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::Config("min_samples_split must be >= 2".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.svm_regularization > 0.0) {
            return Err(Error::Config("svm_regularization must be positive".into()));
        }
        Ok(())
    }
}

/// The three model families that can be trained by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Svm,
    Forest,
    Boosting,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Svm, ModelKind::Forest, ModelKind::Boosting];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Svm => "svm",
            ModelKind::Forest => "forest",
            ModelKind::Boosting => "boosting",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "svm" => Ok(ModelKind::Svm),
            "forest" | "random_forest" | "rf" => Ok(ModelKind::Forest),
            "boosting" | "gradient_boosting" | "gb" => Ok(ModelKind::Boosting),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Any trained classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classifier {
    Tree(TreeModel),
    Forest(ForestModel),
    Boosting(BoostingModel),
    Svm(SvmModel),
}

impl Classifier {
    pub fn model_type(&self) -> &'static str {
        match self {
            Classifier::Tree(_) => "tree",
            Classifier::Forest(_) => "forest",
            Classifier::Boosting(_) => "boosting",
            Classifier::Svm(_) => "svm",
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Classifier::Tree(m) => m.n_features,
            Classifier::Forest(m) => m.n_features,
            Classifier::Boosting(m) => m.n_features,
            Classifier::Svm(m) => m.weights.len(),
        }
    }

    pub fn predict_score(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.n_features(), x)?;
        Ok(match self {
            Classifier::Tree(m) => m.root.predict(x),
            Classifier::Forest(m) => m.score_unchecked(x),
            Classifier::Boosting(m) => m.score_unchecked(x),
            Classifier::Svm(m) => m.score_unchecked(x),
        })
    }

    pub fn predict_label(&self, x: &[f64], threshold: f64) -> Result<bool> {
        Ok(self.predict_score(x)? >= threshold)
    }

    pub fn as_forest(&self) -> Option<&ForestModel> {
        match self {
            Classifier::Forest(m) => Some(m),
            _ => None,
        }
    }
}

pub fn train(kind: ModelKind, data: &Dataset, cfg: &TrainConfig) -> Result<Classifier> {
    cfg.validate()?;
    Ok(match kind {
        ModelKind::Svm => Classifier::Svm(train_svm(data, cfg)?),
        ModelKind::Forest => Classifier::Forest(train_forest(data, cfg)?),
        ModelKind::Boosting => Classifier::Boosting(train_boosting(data, cfg)?),
    })
}

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
