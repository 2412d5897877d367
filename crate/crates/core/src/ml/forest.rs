//! Random forest of Gini trees.
//!
//! Every tree sees a bootstrap resample of the data and `r = floor(sqrt(n))`
//! features. By default the feature subset is drawn once per tree; with
//! [`FeatureSampling::PerSplit`] it is redrawn at every split. Tree `i` draws
//! from its own ChaCha stream `(seed, i)`, so parallel training gives the same
//! model as sequential training.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Criterion, FeatureChoice, GrowParams, Grower, TreeNode};
use super::{Dataset, TrainConfig};
use crate::error::Result;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSampling {
    #[default]
    PerTree,
    PerSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_features: usize,
    pub trees: Vec<TreeNode>,
    /// Per-tree feature subsets. In per-split mode every entry lists all
    /// features, since subsets are drawn at each split.
    pub per_tree_features: Vec<Vec<usize>>,
    pub feature_sampling: FeatureSampling,
    /// Mean impurity decrease per feature, normalized to sum to 1.
    pub feature_importances: Vec<f64>,
}

impl ForestModel {
    /// Mean of the trees' leaf fractions.
    pub(crate) fn score_unchecked(&self, x: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        (sum / self.trees.len() as f64).clamp(0.0, 1.0)
    }

    pub fn tree_scores(&self, x: &[f64]) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict(x)).collect()
    }
}

/// `floor(sqrt(n))`, at least 1.
pub fn features_per_tree(n_features: usize) -> usize {
    ((n_features as f64).sqrt().floor() as usize).max(1)
}

pub(crate) fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn train_forest(data: &Dataset, cfg: &TrainConfig) -> Result<ForestModel> {
    data.require_both_classes()?;
    let n = data.len();
    let n_features = data.n_features();
    let r = features_per_tree(n_features);
    let target: Vec<f64> = data.y.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let weight = data.weight_vec();
    let params = GrowParams {
        max_depth: cfg.forest_max_depth,
        min_samples_split: cfg.min_samples_split,
        min_samples_leaf: cfg.min_samples_leaf,
        criterion: Criterion::Gini,
    };

    let grown: Vec<(TreeNode, Vec<usize>, Vec<f64>)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(cfg.seed, t);
            let boot: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let features: Vec<usize> = match cfg.feature_sampling {
                FeatureSampling::PerTree => {
                    let mut f = sample(&mut rng, n_features, r).into_vec();
                    f.sort_unstable();
                    f
                }
                FeatureSampling::PerSplit => (0..n_features).collect(),
            };
            let choice = match cfg.feature_sampling {
                FeatureSampling::PerTree => FeatureChoice::Fixed(&features),
                FeatureSampling::PerSplit => FeatureChoice::PerSplit { n_features, r },
            };
            let mut grower = Grower {
                x: &data.x,
                target: &target,
                weight: &weight,
                hess: None,
                params,
                features: choice,
                rng: &mut rng,
                importance: vec![0.0; n_features],
            };
            let root = grower.grow(boot, 0);
            let importance = grower.importance;
            (root, features, importance)
        })
        .collect();

    let mut trees = Vec::with_capacity(grown.len());
    let mut per_tree_features = Vec::with_capacity(grown.len());
    let mut importances = vec![0.0; n_features];
    let mut contributing = 0usize;
    for (root, features, imp) in grown {
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            for (acc, v) in importances.iter_mut().zip(&imp) {
                *acc += v / total;
            }
            contributing += 1;
        }
        trees.push(root);
        per_tree_features.push(features);
    }
    Ok(ForestModel {
        n_features,
        trees,
        per_tree_features,
        feature_sampling: cfg.feature_sampling,
        feature_importances: normalize_importances(importances, contributing),
    })
}

fn normalize_importances(mut imp: Vec<f64>, contributing: usize) -> Vec<f64> {
    let n = imp.len();
    if contributing == 0 || n == 0 {
        // No tree ever split.
        return vec![if n == 0 { 0.0 } else { 1.0 / n as f64 }; n];
    }
    let total: f64 = imp.iter().sum();
    for v in imp.iter_mut() {
        *v /= total;
    }
    imp
}
