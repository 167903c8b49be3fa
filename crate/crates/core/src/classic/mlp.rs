use gaitrisk_deepnet::layers::Dense;
use gaitrisk_deepnet::{Graph, ParamStore, RmsProp, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, ModelError, Result};

pub const MLP_LR: f64 = 1e-3;
pub const MLP_ALPHA: f64 = 1e-4;
pub const MLP_TOL: f64 = 1e-4;
pub const MLP_PATIENCE: usize = 10;

/// One ReLU hidden layer and a logistic output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub inputs: usize,
    pub hidden: usize,
    /// Row-major `[inputs, hidden]`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub iterations: usize,
    pub loss_curve: Vec<f64>,
}

impl Mlp {
    /// Full-batch RMSprop on mean cross-entropy plus `alpha/(2n) ||W||^2`,
    /// stopping after [`MLP_PATIENCE`] iterations without a [`MLP_TOL`] gain.
    pub fn fit(hidden: usize, max_iter: usize, x: &[Vec<f64>], y: &[u8], seed: u64) -> Result<Self> {
        if hidden == 0 || max_iter == 0 {
            return Err(ModelError::InvalidHyper(format!("neurons={hidden}, max_iter={max_iter}")));
        }
        let n = x.len();
        let d = x[0].len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let l1 = Dense::new(&mut store, "hidden", d, hidden, 0.0, &mut rng);
        let l2 = Dense::new(&mut store, "out", hidden, 1, 0.0, &mut rng);
        let input = Tensor::new(vec![n, d], x.iter().flatten().copied().collect())?;
        let targets: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        let penalty = MLP_ALPHA / (2.0 * n as f64);
        let mut opt = RmsProp::new(MLP_LR, 0.9, 1e-8);
        let mut best = f64::INFINITY;
        let mut stale = 0;
        let mut curve = Vec::new();
        for _ in 0..max_iter {
            let mut g = Graph::new();
            let xin = g.input(input.clone());
            let h = l1.forward(&mut g, &store, xin)?;
            let h = g.relu(h);
            let z = l2.forward(&mut g, &store, h)?;
            let bce = g.bce_with_logits(z, &targets)?;
            let mut loss = bce;
            for id in [l1.w, l2.w] {
                let w = g.param(&store, id);
                let sq = g.sum_squares(w);
                let sq = g.scale(sq, penalty);
                loss = g.add(loss, sq)?;
            }
            let value = g.value(loss).data()[0];
            if !value.is_finite() {
                return Err(ModelError::NumericalFailure("MLP loss is not finite".into()));
            }
            curve.push(value);
            let grads = g.backward(loss)?;
            opt.step(&mut store, &grads.param_grads(&g));
            if value > best - MLP_TOL {
                stale += 1;
            } else {
                stale = 0;
            }
            best = best.min(value);
            if stale >= MLP_PATIENCE {
                break;
            }
        }
        Ok(Self {
            inputs: d,
            hidden,
            w1: store.get(l1.w).data().to_vec(),
            b1: store.get(l1.b).data().to_vec(),
            w2: store.get(l2.w).data().to_vec(),
            b2: store.get(l2.b).data()[0],
            iterations: curve.len(),
            loss_curve: curve,
        })
    }

    pub fn logit(&self, q: &[f64]) -> f64 {
        let mut z = self.b2;
        for j in 0..self.hidden {
            let a: f64 = self.b1[j] + q.iter().enumerate().map(|(i, v)| v * self.w1[i * self.hidden + j]).sum::<f64>();
            z += a.max(0.0) * self.w2[j];
        }
        z
    }

    pub fn proba(&self, q: &[f64]) -> f64 {
        sigmoid(self.logit(q))
    }
}
