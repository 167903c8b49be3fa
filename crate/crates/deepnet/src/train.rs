use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::graph::Graph;
use crate::layers::ForwardCtx;
use crate::nets::{NetInput, Network};
use crate::params::{ParamId, RmsProp};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    /// Micro-batches whose gradients are averaged into one update.
    pub grad_accumulation: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Draw equal positives and negatives per batch.
    pub balanced: bool,
    /// Stop when the epoch loss has not improved for this many epochs.
    pub patience: Option<usize>,
    /// Weight of the previous running average in batch-norm statistics.
    pub bn_momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            rho: 0.9,
            eps: 1e-8,
            grad_accumulation: 2,
            epochs: 300,
            batch_size: 32,
            balanced: true,
            patience: Some(30),
            bn_momentum: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(NetError::InvalidConfig(format!("lr must be >= 0, got {}", self.lr)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(NetError::InvalidConfig(format!("rho must lie in (0,1), got {}", self.rho)));
        }
        if self.grad_accumulation == 0 || self.batch_size == 0 {
            return Err(NetError::InvalidConfig("accumulation and batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Training samples: per-sample stance blocks `[T, A, C]`, optional point rows, 0/1 labels.
#[derive(Debug, Clone)]
pub struct TrainSet {
    pub stances: Vec<Tensor>,
    pub points: Option<Vec<Vec<f64>>>,
    pub labels: Vec<u8>,
}

impl TrainSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Assembles the batch for the given sample indices.
    pub fn batch(&self, idx: &[usize]) -> Result<NetInput> {
        let refs: Vec<&Tensor> = idx.iter().map(|&i| &self.stances[i]).collect();
        let stance = Tensor::stack(&refs)?;
        let points = match &self.points {
            Some(p) => {
                let width = p.first().map_or(0, Vec::len);
                let data = idx.iter().flat_map(|&i| p[i].iter().copied()).collect();
                Some(Tensor::new(vec![idx.len(), width], data)?)
            }
            None => None,
        };
        Ok(NetInput { stance, points })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub loss: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    pub updates: usize,
    pub stopped_early: bool,
}

/// Batch index generator. With `balanced`, every batch holds `ceil(b/2)` positives
/// and `floor(b/2)` negatives drawn from per-class queues reshuffled each epoch.
#[derive(Debug)]
pub struct BatchSampler {
    positives: Vec<usize>,
    negatives: Vec<usize>,
    all: Vec<usize>,
    balanced: bool,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(labels: &[u8], batch_size: usize, balanced: bool, seed: u64) -> Self {
        let positives = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
        let negatives = (0..labels.len()).filter(|&i| labels[i] != 1).collect();
        Self {
            positives,
            negatives,
            all: (0..labels.len()).collect(),
            balanced,
            batch_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Batches for one epoch; `ceil(n / batch_size)` of them.
    pub fn epoch(&mut self) -> Vec<Vec<usize>> {
        let n = self.all.len();
        let n_batches = n.div_ceil(self.batch_size);
        if !self.balanced || self.positives.is_empty() || self.negatives.is_empty() {
            self.all.shuffle(&mut self.rng);
            return self.all.chunks(self.batch_size).map(<[usize]>::to_vec).collect();
        }
        self.positives.shuffle(&mut self.rng);
        self.negatives.shuffle(&mut self.rng);
        let (mut pi, mut ni) = (0usize, 0usize);
        let mut out = Vec::with_capacity(n_batches);
        for b in 0..n_batches {
            let size = if b + 1 == n_batches { n - b * self.batch_size } else { self.batch_size };
            let size = size.max(2);
            let n_pos = size.div_ceil(2);
            let mut batch = Vec::with_capacity(size);
            for _ in 0..n_pos {
                if pi == self.positives.len() {
                    self.positives.shuffle(&mut self.rng);
                    pi = 0;
                }
                batch.push(self.positives[pi]);
                pi += 1;
            }
            for _ in n_pos..size {
                if ni == self.negatives.len() {
                    self.negatives.shuffle(&mut self.rng);
                    ni = 0;
                }
                batch.push(self.negatives[ni]);
                ni += 1;
            }
            out.push(batch);
        }
        out
    }
}

/// Loss of one batch: mean binary cross-entropy plus every parameter's L2 penalty.
pub fn batch_loss<N: Network + ?Sized>(
    net: &N,
    g: &mut Graph,
    input: NetInput,
    labels: &[f64],
    ctx: &mut ForwardCtx,
) -> Result<(crate::graph::Var, crate::nets::NetOutput)> {
    let stance = g.input(input.stance);
    let points = input.points.map(|p| g.input(p));
    batch_loss_vars(net, g, stance, points, labels, ctx)
}

/// [`batch_loss`] for inputs already on the tape.
pub fn batch_loss_vars<N: Network + ?Sized>(
    net: &N,
    g: &mut Graph,
    stance: crate::graph::Var,
    points: Option<crate::graph::Var>,
    labels: &[f64],
    ctx: &mut ForwardCtx,
) -> Result<(crate::graph::Var, crate::nets::NetOutput)> {
    let out = net.forward_vars(g, stance, points, ctx)?;
    let mut loss = g.bce_with_logits(out.logit, labels)?;
    let store = net.store();
    let penalised: Vec<(ParamId, f64)> = store
        .trainable_ids()
        .filter(|&id| store.entry(id).l2 > 0.0)
        .map(|id| (id, store.entry(id).l2))
        .collect();
    for (id, l2) in penalised {
        let w = g.param(store, id);
        let sq = g.sum_squares(w);
        let term = g.scale(sq, l2);
        loss = g.add(loss, term)?;
    }
    Ok((loss, out))
}

fn micro_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    let mut z = seed ^ ((epoch as u64) << 32) ^ (batch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mini-batch RMSprop training with gradient accumulation.
pub fn train<N: Network + ?Sized>(net: &mut N, data: &TrainSet, cfg: &TrainConfig) -> Result<History> {
    cfg.validate()?;
    if !data.labels.contains(&1) || !data.labels.contains(&0) {
        return Err(NetError::SingleClass);
    }
    let mut opt = RmsProp::new(cfg.lr, cfg.rho, cfg.eps);
    let mut sampler = BatchSampler::new(&data.labels, cfg.batch_size, cfg.balanced, cfg.seed);
    let mut history = History::default();
    let mut best_loss = f64::INFINITY;
    let mut since_best = 0usize;
    let mut last_finite = f64::NAN;

    for epoch in 0..cfg.epochs {
        let batches = sampler.epoch();
        let mut pending: Vec<(ParamId, Tensor)> = Vec::new();
        let mut pending_count = 0usize;
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        let (mut tp, mut tn, mut fp, mut fneg) = (0usize, 0usize, 0usize, 0usize);

        for (bi, idx) in batches.iter().enumerate() {
            let labels: Vec<f64> = idx.iter().map(|&i| f64::from(data.labels[i])).collect();
            let input = data.batch(idx)?;
            let mut g = Graph::new();
            let mut ctx = ForwardCtx::train(micro_seed(cfg.seed, epoch, bi));
            let (loss, out) = batch_loss(&*net, &mut g, input, &labels, &mut ctx)?;
            let lv = g.value(loss).data()[0];
            if !lv.is_finite() {
                return Err(NetError::Divergence {
                    epoch,
                    update: history.updates,
                    last_finite_loss: last_finite,
                    state_dump: Box::new(net.store().clone()),
                });
            }
            last_finite = lv;
            loss_sum += lv * idx.len() as f64;
            seen += idx.len();
            for (p, &y) in g.value(out.prob).data().iter().zip(&labels) {
                match (*p >= 0.5, y >= 0.5) {
                    (true, true) => tp += 1,
                    (false, false) => tn += 1,
                    (true, false) => fp += 1,
                    (false, true) => fneg += 1,
                }
            }
            let grads = g.backward(loss)?.param_grads(&g);
            if pending.is_empty() {
                pending = grads;
            } else {
                for ((_, acc), (_, gnew)) in pending.iter_mut().zip(grads.iter()) {
                    acc.add_assign(gnew);
                }
            }
            pending_count += 1;
            let momentum = cfg.bn_momentum;
            let store = net.store_mut();
            for (mean_id, var_id, stats) in ctx.batch_stats() {
                for (r, b) in store.get_mut(*mean_id).data_mut().iter_mut().zip(&stats.mean) {
                    *r = momentum * *r + (1.0 - momentum) * b;
                }
                for (r, b) in store.get_mut(*var_id).data_mut().iter_mut().zip(&stats.var) {
                    *r = momentum * *r + (1.0 - momentum) * b;
                }
            }
            if pending_count == cfg.grad_accumulation || bi + 1 == batches.len() {
                let scale = 1.0 / pending_count as f64;
                for (_, t) in &mut pending {
                    t.data_mut().iter_mut().for_each(|v| *v *= scale);
                }
                opt.step(net.store_mut(), &pending);
                history.updates += 1;
                pending.clear();
                pending_count = 0;
            }
        }

        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let stats = EpochStats {
            loss: loss_sum / seen.max(1) as f64,
            accuracy: ratio(tp + tn, seen),
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fneg),
        };
        history.epochs.push(stats);
        log::debug!("epoch {epoch}: loss {:.5} acc {:.3}", stats.loss, stats.accuracy);
        if stats.loss < best_loss - 1e-4 {
            best_loss = stats.loss;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if let Some(p) = cfg.patience {
            if since_best >= p {
                history.stopped_early = true;
                break;
            }
        }
    }
    Ok(history)
}

/// Inference-mode probabilities, evaluated in chunks of `batch_size`.
pub fn predict_proba<N: Network + ?Sized>(net: &N, data: &TrainSet, batch_size: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(data.len());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let mut g = Graph::new();
        let mut ctx = ForwardCtx::eval();
        let o = net.forward(&mut g, data.batch(chunk)?, &mut ctx)?;
        out.extend_from_slice(g.value(o.prob).data());
    }
    Ok(out)
}
