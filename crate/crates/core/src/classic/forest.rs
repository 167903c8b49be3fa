use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TreeParams};
use super::{ModelError, Result};
use crate::seed::derive_seed;

/// Bagged trees, one bootstrap sample each, combined by hard vote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn fit(n_trees: usize, params: TreeParams, bootstrap: bool, x: &[Vec<f64>], y: &[u8], seed: u64) -> Result<Self> {
        if n_trees == 0 {
            return Err(ModelError::InvalidHyper("forest needs at least one tree".into()));
        }
        let n = x.len();
        let trees = (0..n_trees as u64)
            .map(|t| {
                let tree_seed = derive_seed(seed, "rf/tree", t);
                if !bootstrap {
                    return DecisionTree::fit(params, x, y, tree_seed);
                }
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "rf/bootstrap", t));
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let bx: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
                let by: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
                DecisionTree::fit(params, &bx, &by, tree_seed)
            })
            .collect();
        Ok(Self { trees })
    }

    /// Fraction of trees voting positive.
    pub fn proba(&self, q: &[f64]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.predict(q) == 1).count();
        votes as f64 / self.trees.len() as f64
    }
}

/// Binary SAMME boosting over weighted trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoost {
    pub trees: Vec<DecisionTree>,
    pub alphas: Vec<f64>,
}

impl AdaBoost {
    pub fn fit(rounds: usize, params: TreeParams, x: &[Vec<f64>], y: &[u8], seed: u64) -> Result<Self> {
        if rounds == 0 {
            return Err(ModelError::InvalidHyper("boosting needs at least one round".into()));
        }
        let n = x.len();
        let mut w = vec![1.0 / n as f64; n];
        let mut trees = Vec::new();
        let mut alphas = Vec::new();
        for m in 0..rounds as u64 {
            let tree = DecisionTree::fit_weighted(params, x, y, &w, derive_seed(seed, "adb/round", m));
            let miss: Vec<bool> = x.iter().zip(y).map(|(r, &t)| tree.predict(r) != t).collect();
            let total: f64 = w.iter().sum();
            let err = w.iter().zip(&miss).filter(|(_, &b)| b).map(|(v, _)| v).sum::<f64>() / total;
            if err <= 0.0 {
                trees.push(tree);
                alphas.push(1.0);
                break;
            }
            if err >= 0.5 {
                if trees.is_empty() {
                    return Err(ModelError::NumericalFailure(format!("first boosting round has weighted error {err:.3}")));
                }
                break;
            }
            let alpha = ((1.0 - err) / err).ln();
            for (wi, &b) in w.iter_mut().zip(&miss) {
                if b {
                    *wi *= alpha.exp();
                }
            }
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            trees.push(tree);
            alphas.push(alpha);
        }
        Ok(Self { trees, alphas })
    }

    fn score(&self, q: &[f64], rounds: usize) -> f64 {
        let f: f64 = self
            .trees
            .iter()
            .zip(&self.alphas)
            .take(rounds)
            .map(|(t, a)| if t.predict(q) == 1 { *a } else { -*a })
            .sum();
        let norm: f64 = self.alphas.iter().take(rounds).sum();
        f / norm
    }

    /// `(F / sum alpha + 1) / 2`, with `F` the signed weighted vote.
    pub fn proba(&self, q: &[f64]) -> f64 {
        (self.score(q, self.trees.len()) + 1.0) / 2.0
    }

    /// Training error after each round.
    pub fn staged_error(&self, x: &[Vec<f64>], y: &[u8]) -> Vec<f64> {
        (1..=self.trees.len())
            .map(|m| {
                let wrong = x.iter().zip(y).filter(|(r, &t)| u8::from(self.score(r, m) >= 0.0) != t).count();
                wrong as f64 / x.len() as f64
            })
            .collect()
    }
}
