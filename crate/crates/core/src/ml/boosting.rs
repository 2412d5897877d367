//! Boosted trees.
//!
//! [`BoostingMode::Gradient`] is stage-wise additive logistic regression:
//! the model starts at the log-odds of the positive rate and each round adds a
//! shallow regression tree fitted to the residuals `y - p`, scaled by the
//! learning rate. Leaves hold the Newton step `sum(r) / sum(p(1-p))`.
//!
//! [`BoostingMode::AdaBoost`] reweights samples after each round and gives
//! every stage the weight `0.5 * ln((1 - err) / err)`; stage outputs are ±1.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{Criterion, FeatureChoice, GrowParams, Grower, TreeNode};
use super::{logistic, Dataset, TrainConfig};
use crate::error::Result;

const ERR_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoostingMode {
    #[default]
    Gradient,
    AdaBoost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub tree: TreeNode,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostingModel {
    pub n_features: usize,
    pub mode: BoostingMode,
    pub stages: Vec<Stage>,
    pub learning_rate: f64,
    pub base_score: f64,
}

impl BoostingModel {
    /// Additive score before squashing.
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        match self.mode {
            BoostingMode::Gradient => {
                self.base_score
                    + self
                        .stages
                        .iter()
                        .map(|s| s.weight * s.tree.predict(x))
                        .sum::<f64>()
            }
            BoostingMode::AdaBoost => {
                self.base_score
                    + self
                        .stages
                        .iter()
                        .map(|s| s.weight * vote(s.tree.predict(x)))
                        .sum::<f64>()
            }
        }
    }

    pub(crate) fn score_unchecked(&self, x: &[f64]) -> f64 {
        match self.mode {
            BoostingMode::Gradient => logistic(self.raw_score(x)),
            // AdaBoost's additive score estimates half the log-odds.
            BoostingMode::AdaBoost => logistic(2.0 * self.raw_score(x)),
        }
    }
}

fn vote(leaf: f64) -> f64 {
    if leaf >= 0.5 {
        1.0
    } else {
        -1.0
    }
}

pub fn train_boosting(data: &Dataset, cfg: &TrainConfig) -> Result<BoostingModel> {
    data.require_both_classes()?;
    match cfg.boosting_mode {
        BoostingMode::Gradient => train_gradient(data, cfg),
        BoostingMode::AdaBoost => train_adaboost(data, cfg),
    }
}

fn params(cfg: &TrainConfig, criterion: Criterion) -> GrowParams {
    GrowParams {
        max_depth: Some(cfg.boosting_max_depth),
        min_samples_split: cfg.min_samples_split,
        min_samples_leaf: cfg.min_samples_leaf,
        criterion,
    }
}

fn train_gradient(data: &Dataset, cfg: &TrainConfig) -> Result<BoostingModel> {
    let n = data.len();
    let n_features = data.n_features();
    let features: Vec<usize> = (0..n_features).collect();
    let weight = data.weight_vec();
    let y: Vec<f64> = data.y.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();

    let w_total: f64 = weight.iter().sum();
    let w_pos: f64 = weight.iter().zip(&y).map(|(w, t)| w * t).sum();
    let rate = w_pos / w_total;
    let base_score = (rate / (1.0 - rate)).ln();

    let mut raw = vec![base_score; n];
    let mut stages = Vec::with_capacity(cfg.boosting_rounds);
    // Trees are fitted on all samples and features, so the stream is unused,
    // but Grower wants one.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut residual = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for _ in 0..cfg.boosting_rounds {
        for i in 0..n {
            let p = logistic(raw[i]);
            residual[i] = y[i] - p;
            hess[i] = (p * (1.0 - p)).max(1e-12);
        }
        let mut grower = Grower {
            x: &data.x,
            target: &residual,
            weight: &weight,
            hess: Some(&hess),
            params: params(cfg, Criterion::SquaredError),
            features: FeatureChoice::Fixed(&features),
            rng: &mut rng,
            importance: vec![0.0; n_features],
        };
        let tree = grower.grow((0..n).collect(), 0);
        for (r, x) in raw.iter_mut().zip(&data.x) {
            *r += cfg.learning_rate * tree.predict(x);
        }
        stages.push(Stage {
            tree,
            weight: cfg.learning_rate,
        });
    }
    Ok(BoostingModel {
        n_features,
        mode: BoostingMode::Gradient,
        stages,
        learning_rate: cfg.learning_rate,
        base_score,
    })
}

fn train_adaboost(data: &Dataset, cfg: &TrainConfig) -> Result<BoostingModel> {
    let n = data.len();
    let n_features = data.n_features();
    let features: Vec<usize> = (0..n_features).collect();
    let y: Vec<f64> = data.y.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let sign: Vec<f64> = data.y.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let mut w = data.weight_vec();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stages = Vec::with_capacity(cfg.boosting_rounds);
    for _ in 0..cfg.boosting_rounds {
        let mut grower = Grower {
            x: &data.x,
            target: &y,
            weight: &w,
            hess: None,
            params: params(cfg, Criterion::Gini),
            features: FeatureChoice::Fixed(&features),
            rng: &mut rng,
            importance: vec![0.0; n_features],
        };
        let tree = grower.grow((0..n).collect(), 0);
        let h: Vec<f64> = data.x.iter().map(|x| vote(tree.predict(x))).collect();
        let err: f64 = (0..n).filter(|&i| h[i] != sign[i]).map(|i| w[i]).sum();
        let err = err.clamp(ERR_FLOOR, 1.0 - ERR_FLOOR);
        let alpha = 0.5 * ((1.0 - err) / err).ln();
        for i in 0..n {
            w[i] *= (-alpha * sign[i] * h[i]).exp();
        }
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= z);
        stages.push(Stage { tree, weight: alpha });
    }
    Ok(BoostingModel {
        n_features,
        mode: BoostingMode::AdaBoost,
        stages,
        learning_rate: cfg.learning_rate,
        base_score: 0.0,
    })
}
