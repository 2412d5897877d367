//! CART decision trees.
//!
//! Classification trees split on weighted Gini impurity and store the
//! positive fraction in each leaf. Regression trees (used as boosting stages)
//! split on weighted squared error and store a Newton step in each leaf.
//! Among equally good splits the lowest feature index wins, then the lowest
//! threshold.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, TrainConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        leaf: f64,
    },
}

impl TreeNode {
    /// `x[feature] <= threshold` goes left.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { leaf } => return *leaf,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub fn leaves(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<f64>) {
        match self {
            TreeNode::Leaf { leaf } => out.push(*leaf),
            TreeNode::Split { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }
}

/// A standalone classification tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub n_features: usize,
    pub root: TreeNode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Criterion {
    Gini,
    SquaredError,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub criterion: Criterion,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum FeatureChoice<'a> {
    Fixed(&'a [usize]),
    /// Draw `r` of `n_features` at every split.
    PerSplit { n_features: usize, r: usize },
}

pub(crate) struct Grower<'a, R: Rng> {
    pub x: &'a [Vec<f64>],
    pub target: &'a [f64],
    pub weight: &'a [f64],
    /// Leaf denominators for Newton steps; unit when absent.
    pub hess: Option<&'a [f64]>,
    pub params: GrowParams,
    pub features: FeatureChoice<'a>,
    pub rng: &'a mut R,
    /// Total impurity decrease per feature.
    pub importance: Vec<f64>,
}

#[derive(Clone, Copy, Default)]
struct Stats {
    w: f64,
    wt: f64,
    wt2: f64,
}

impl Stats {
    fn add(&mut self, w: f64, t: f64) {
        self.w += w;
        self.wt += w * t;
        self.wt2 += w * t * t;
    }

    fn sub(self, o: Stats) -> Stats {
        Stats {
            w: self.w - o.w,
            wt: self.wt - o.wt,
            wt2: self.wt2 - o.wt2,
        }
    }

    /// Weighted impurity total of the node (not normalized by weight).
    fn impurity(&self, criterion: Criterion) -> f64 {
        if self.w <= 0.0 {
            return 0.0;
        }
        match criterion {
            Criterion::Gini => {
                let p = (self.wt / self.w).clamp(0.0, 1.0);
                self.w * 2.0 * p * (1.0 - p)
            }
            Criterion::SquaredError => (self.wt2 - self.wt * self.wt / self.w).max(0.0),
        }
    }
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl<R: Rng> Grower<'_, R> {
    pub fn grow(&mut self, mut samples: Vec<usize>, depth: usize) -> TreeNode {
        let stats = self.stats(&samples);
        let node_impurity = stats.impurity(self.params.criterion);

        let at_max_depth = self.params.max_depth.is_some_and(|d| depth >= d);
        if self.is_pure(&samples)
            || at_max_depth
            || samples.len() < self.params.min_samples_split
            || samples.len() < 2 * self.params.min_samples_leaf
        {
            return self.leaf(&samples);
        }

        let Some(best) = self.best_split(&mut samples) else {
            return self.leaf(&samples);
        };
        self.importance[best.feature] += (node_impurity - best.impurity).max(0.0);

        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&s| self.x[s][best.feature] <= best.threshold);
        let left = Box::new(self.grow(left, depth + 1));
        let right = Box::new(self.grow(right, depth + 1));
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        }
    }

    fn stats(&self, samples: &[usize]) -> Stats {
        let mut s = Stats::default();
        for &i in samples {
            s.add(self.weight[i], self.target[i]);
        }
        s
    }

    fn is_pure(&self, samples: &[usize]) -> bool {
        match self.params.criterion {
            Criterion::Gini => {
                let first = self.target[samples[0]];
                samples.iter().all(|&i| self.target[i] == first)
            }
            Criterion::SquaredError => {
                let s = self.stats(samples);
                s.impurity(Criterion::SquaredError) <= 1e-12 * s.w.max(1.0)
            }
        }
    }

    fn leaf(&self, samples: &[usize]) -> TreeNode {
        let mut num = 0.0;
        let mut den = 0.0;
        for &i in samples {
            let w = self.weight[i];
            num += w * self.target[i];
            den += w * self.hess.map_or(1.0, |h| h[i]);
        }
        let value = if den.abs() < 1e-12 { 0.0 } else { num / den };
        let value = match self.params.criterion {
            Criterion::Gini => value.clamp(0.0, 1.0),
            Criterion::SquaredError => value,
        };
        TreeNode::Leaf { leaf: value }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        match self.features {
            FeatureChoice::Fixed(f) => f.to_vec(),
            FeatureChoice::PerSplit { n_features, r } => {
                let mut f = sample(self.rng, n_features, r.min(n_features)).into_vec();
                f.sort_unstable();
                f
            }
        }
    }

    fn best_split(&mut self, samples: &mut [usize]) -> Option<BestSplit> {
        let features = self.candidate_features();
        let total = self.stats(samples);
        let min_leaf = self.params.min_samples_leaf;
        let n = samples.len();
        let mut best: Option<BestSplit> = None;

        for &f in &features {
            samples.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left = Stats::default();
            for k in 0..n - 1 {
                let s = samples[k];
                left.add(self.weight[s], self.target[s]);
                let lo = self.x[s][f];
                let hi = self.x[samples[k + 1]][f];
                if lo == hi {
                    continue;
                }
                let n_left = k + 1;
                if n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let right = total.sub(left);
                let imp = left.impurity(self.params.criterion) + right.impurity(self.params.criterion);
                let better = match &best {
                    None => true,
                    Some(b) => imp < b.impurity - 1e-12 * (1.0 + b.impurity.abs()),
                };
                if better {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        impurity: imp,
                    });
                }
            }
        }
        best
    }
}

/// Grows one classification tree restricted to `allowed_features`.
pub fn train_tree<R: Rng>(
    data: &Dataset,
    allowed_features: &[usize],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TreeModel> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if allowed_features.is_empty() {
        return Err(Error::Config("allowed feature set is empty".into()));
    }
    let n_features = data.n_features();
    if let Some(&bad) = allowed_features.iter().find(|&&f| f >= n_features) {
        return Err(Error::DimensionMismatch {
            expected: n_features,
            got: bad + 1,
        });
    }
    let mut features = allowed_features.to_vec();
    features.sort_unstable();
    features.dedup();
    let target: Vec<f64> = data.y.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let weight = data.weight_vec();
    let mut grower = Grower {
        x: &data.x,
        target: &target,
        weight: &weight,
        hess: None,
        params: GrowParams {
            max_depth: cfg.forest_max_depth,
            min_samples_split: cfg.min_samples_split,
            min_samples_leaf: cfg.min_samples_leaf,
            criterion: Criterion::Gini,
        },
        features: FeatureChoice::Fixed(&features),
        rng,
        importance: vec![0.0; n_features],
    };
    let root = grower.grow((0..data.len()).collect(), 0);
    Ok(TreeModel { n_features, root })
}
