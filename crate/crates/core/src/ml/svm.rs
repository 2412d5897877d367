//! Linear SVM trained by full-batch subgradient descent on the
//! L2-regularized hinge loss, over standardized features.
//!
//! Each epoch takes one step of size `1 / sqrt(epoch + 1)`. The iterate with
//! the lowest objective is kept, since subgradient steps are not monotone.

use serde::{Deserialize, Serialize};

use super::{logistic, Dataset, TrainConfig};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_means: Vec<f64>,
    pub feature_scales: Vec<f64>,
}

impl SvmModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        let mut m = self.bias;
        for (k, &v) in x.iter().enumerate() {
            m += self.weights[k] * (v - self.feature_means[k]) / self.feature_scales[k];
        }
        m
    }

    pub(crate) fn score_unchecked(&self, x: &[f64]) -> f64 {
        logistic(self.margin(x))
    }
}

fn standardization(data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let d = data.n_features();
    let n = data.len() as f64;
    let mut means = vec![0.0; d];
    for row in &data.x {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut scales = vec![0.0; d];
    for row in &data.x {
        for k in 0..d {
            let dv = row[k] - means[k];
            scales[k] += dv * dv;
        }
    }
    for s in scales.iter_mut() {
        let sd = (*s / n).sqrt();
        // Constant features get unit scale.
        *s = if sd > 1e-12 { sd } else { 1.0 };
    }
    (means, scales)
}

pub fn train_svm(data: &Dataset, cfg: &TrainConfig) -> Result<SvmModel> {
    data.require_both_classes()?;
    let (means, scales) = standardization(data);
    let d = data.n_features();
    let z: Vec<Vec<f64>> = data
        .x
        .iter()
        .map(|row| (0..d).map(|k| (row[k] - means[k]) / scales[k]).collect())
        .collect();
    let sign: Vec<f64> = data.y.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let sw = data.weight_vec();
    let w_total: f64 = sw.iter().sum();
    let lambda = cfg.svm_regularization;

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut best = (f64::INFINITY, w.clone(), b);
    let mut grad_w = vec![0.0; d];
    for epoch in 0..=cfg.svm_epochs {
        // Objective and subgradient at the current iterate.
        grad_w.iter_mut().zip(&w).for_each(|(g, wk)| *g = lambda * wk);
        let mut grad_b = 0.0;
        let mut hinge = 0.0;
        for i in 0..z.len() {
            let m: f64 = b + z[i].iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let slack = 1.0 - sign[i] * m;
            if slack > 0.0 {
                let c = sw[i] / w_total;
                hinge += c * slack;
                for k in 0..d {
                    grad_w[k] -= c * sign[i] * z[i][k];
                }
                grad_b -= c * sign[i];
            }
        }
        let objective = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>() + hinge;
        if objective < best.0 {
            best = (objective, w.clone(), b);
        }
        if epoch == cfg.svm_epochs {
            break;
        }
        let eta = 1.0 / ((epoch + 1) as f64).sqrt();
        for k in 0..d {
            w[k] -= eta * grad_w[k];
        }
        b -= eta * grad_b;
    }
    let (_, weights, bias) = best;
    Ok(SvmModel {
        weights,
        bias,
        feature_means: means,
        feature_scales: scales,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn separable(seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..200 {
            let pos = i % 2 == 0;
            let c = if pos { 2.0 } else { -2.0 };
            x.push(vec![c + rng.gen_range(-1.0..1.0), rng.gen_range(-3.0..3.0)]);
            y.push(pos);
        }
        Dataset::new(x, y).unwrap()
    }

    fn accuracy(m: &SvmModel, d: &Dataset) -> f64 {
        let ok = d
            .x
            .iter()
            .zip(&d.y)
            .filter(|(x, &y)| (m.margin(x) >= 0.0) == y)
            .count();
        ok as f64 / d.len() as f64
    }

    #[test]
    fn separable_accuracy() {
        let d = separable(1);
        let m = train_svm(&d, &TrainConfig::default()).unwrap();
        assert!(accuracy(&m, &d) >= 0.99);
        assert!(m.feature_scales.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn identical_vectors_give_majority() {
        let d = Dataset::new(
            vec![vec![1.0, 2.0]; 10],
            vec![true, true, true, true, true, true, false, false, false, false],
        )
        .unwrap();
        let m = train_svm(&d, &TrainConfig::default()).unwrap();
        for x in [[1.0, 2.0], [0.0, 0.0], [-5.0, 9.0]] {
            assert!(m.margin(&x) > 0.0);
        }
        let d = Dataset::new(vec![vec![3.0]; 5], vec![false, false, false, true, true]).unwrap();
        let m = train_svm(&d, &TrainConfig::default()).unwrap();
        assert!(m.margin(&[3.0]) < 0.0);
    }

    #[test]
    fn uniform_scaling_invariance() {
        let d = separable(2);
        let scaled = Dataset::new(
            d.x.iter().map(|r| r.iter().map(|v| v * 10.0).collect()).collect(),
            d.y.clone(),
        )
        .unwrap();
        let cfg = TrainConfig::default();
        let a = train_svm(&d, &cfg).unwrap();
        let b = train_svm(&scaled, &cfg).unwrap();
        for (x, xs) in d.x.iter().zip(&scaled.x) {
            assert_eq!(a.margin(x) >= 0.0, b.margin(xs) >= 0.0);
        }
    }

    #[test]
    fn zero_variance_feature_gets_unit_scale() {
        let d = Dataset::new(
            vec![vec![1.0, 7.0], vec![2.0, 7.0], vec![3.0, 7.0]],
            vec![false, true, true],
        )
        .unwrap();
        let m = train_svm(&d, &TrainConfig::default()).unwrap();
        assert_eq!(m.feature_scales[1], 1.0);
    }
}
