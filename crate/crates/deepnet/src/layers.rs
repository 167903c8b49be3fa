//! Parameterised building blocks. Each layer owns [`ParamId`]s into a shared
//! [`ParamStore`] and appends its computation to a [`Graph`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::graph::{BatchStats, Graph, Var};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Per-forward state: mode, the mask/noise stream and collected side outputs.
#[derive(Debug)]
pub struct ForwardCtx {
    pub train: bool,
    rng: ChaCha8Rng,
    pub(crate) bn_stats: Vec<(ParamId, ParamId, BatchStats)>,
    /// Replaces every squeeze-excitation gate with a constant when set.
    pub se_gate_override: Option<f64>,
    /// Squeeze-excitation gates produced during the forward, in layer order.
    pub se_gates: Vec<Var>,
}

impl ForwardCtx {
    pub fn eval() -> Self {
        Self::new(false, 0)
    }

    pub fn train(seed: u64) -> Self {
        Self::new(true, seed)
    }

    pub fn new(train: bool, seed: u64) -> Self {
        Self {
            train,
            rng: ChaCha8Rng::seed_from_u64(seed),
            bn_stats: Vec::new(),
            se_gate_override: None,
            se_gates: Vec::new(),
        }
    }

    pub fn batch_stats(&self) -> &[(ParamId, ParamId, BatchStats)] {
        &self.bn_stats
    }

    fn bernoulli_mask(&mut self, shape: &[usize], rate: f64) -> Tensor {
        let keep = 1.0 - rate;
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| if self.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        Tensor::new(shape.to_vec(), data).expect("mask shape")
    }

    /// Mask of shape `[B, inner]` repeated over `steps` positions: `[B, steps, inner]`.
    fn sequence_mask(&mut self, batch: usize, steps: usize, inner: usize, rate: f64) -> Tensor {
        let base = self.bernoulli_mask(&[batch, inner], rate);
        let mut data = Vec::with_capacity(batch * steps * inner);
        for b in 0..batch {
            let row = &base.data()[b * inner..(b + 1) * inner];
            for _ in 0..steps {
                data.extend_from_slice(row);
            }
        }
        Tensor::new(vec![batch, steps, inner], data).expect("mask shape")
    }

    fn gaussian(&mut self, shape: &[usize], std: f64) -> Tensor {
        let normal = Normal::new(0.0, std).expect("finite std");
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| normal.sample(&mut self.rng)).collect();
        Tensor::new(shape.to_vec(), data).expect("noise shape")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, l2: f64, rng: &mut R) -> Self {
        let w = store.add_uniform(format!("{name}.w"), &[inputs, outputs], inputs, l2, rng);
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[outputs]));
        Self { w, b, inputs, outputs }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let y = g.matmul(x, w)?;
        g.add_bias(y, b)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub kernel: usize,
    pub inputs: usize,
    pub filters: usize,
}

impl Conv1d {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, inputs: usize, filters: usize, kernel: usize, rng: &mut R) -> Self {
        let w = store.add_uniform(format!("{name}.w"), &[kernel, inputs, filters], kernel * inputs, 0.0, rng);
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[filters]));
        Self { w, b, kernel, inputs, filters }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        g.conv1d(x, w, Some(b))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub width: usize,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[width], 1.0)),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[width])),
            running_mean: store.add_buffer(format!("{name}.running_mean"), Tensor::zeros(&[width])),
            running_var: store.add_buffer(format!("{name}.running_var"), Tensor::full(&[width], 1.0)),
            width,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, ctx: &mut ForwardCtx) -> Result<Var> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        if ctx.train {
            let (y, stats) = g.batch_norm_train(x, gamma, beta)?;
            ctx.bn_stats.push((self.running_mean, self.running_var, stats));
            Ok(y)
        } else {
            let mean = store.get(self.running_mean).data().to_vec();
            let var = store.get(self.running_var).data().to_vec();
            g.batch_norm_eval(x, gamma, beta, &mean, &var)
        }
    }
}

/// Inverted dropout; identity outside training.
pub fn dropout(g: &mut Graph, x: Var, rate: f64, ctx: &mut ForwardCtx) -> Result<Var> {
    if !ctx.train || rate <= 0.0 {
        return Ok(x);
    }
    let mask = ctx.bernoulli_mask(g.shape(x), rate);
    g.mul_const(x, mask)
}

/// Additive zero-mean Gaussian noise; identity outside training.
pub fn gaussian_noise(g: &mut Graph, x: Var, std: f64, ctx: &mut ForwardCtx) -> Result<Var> {
    if !ctx.train || std <= 0.0 {
        return Ok(x);
    }
    let noise = ctx.gaussian(g.shape(x), std);
    g.add_const(x, &noise)
}

/// Multi-scale residual block over `[B, L, C]`: parallel kernel-1/3/5 convolutions
/// plus a max-pool + 1x1 path, concatenated to `filters` channels, added to a 1x1
/// projection of the input, then ReLU.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InceptionResidual {
    pub k1: Conv1d,
    pub k3: Conv1d,
    pub k5: Conv1d,
    pub pool_proj: Conv1d,
    pub shortcut: Conv1d,
    pub filters: usize,
}

impl InceptionResidual {
    /// Conv paths get `(filters - 1) / 3` channels each; the pool path takes the rest.
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, inputs: usize, filters: usize, rng: &mut R) -> Result<Self> {
        if filters < 4 {
            return Err(NetError::InvalidConfig(format!("inception block needs >= 4 filters, got {filters}")));
        }
        let per_path = (filters - 1) / 3;
        let pool = filters - 3 * per_path;
        Ok(Self {
            k1: Conv1d::new(store, &format!("{name}.k1"), inputs, per_path, 1, rng),
            k3: Conv1d::new(store, &format!("{name}.k3"), inputs, per_path, 3, rng),
            k5: Conv1d::new(store, &format!("{name}.k5"), inputs, per_path, 5, rng),
            pool_proj: Conv1d::new(store, &format!("{name}.pool"), inputs, pool, 1, rng),
            shortcut: Conv1d::new(store, &format!("{name}.shortcut"), inputs, filters, 1, rng),
            filters,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let a = self.k1.forward(g, store, x)?;
        let b = self.k3.forward(g, store, x)?;
        let c = self.k5.forward(g, store, x)?;
        let pooled = g.maxpool3(x)?;
        let d = self.pool_proj.forward(g, store, pooled)?;
        let mixed = g.concat(&[a, b, c, d])?;
        let skip = self.shortcut.forward(g, store, x)?;
        let sum = g.add(mixed, skip)?;
        Ok(g.relu(sum))
    }
}

/// Channel gating: global average over time, bottleneck ReLU dense, sigmoid dense.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SqueezeExcitation {
    pub squeeze: Dense,
    pub excite: Dense,
}

impl SqueezeExcitation {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, channels: usize, reduction: usize, rng: &mut R) -> Self {
        let hidden = (channels / reduction.max(1)).max(1);
        Self {
            squeeze: Dense::new(store, &format!("{name}.squeeze"), channels, hidden, 0.0, rng),
            excite: Dense::new(store, &format!("{name}.excite"), hidden, channels, 0.0, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, ctx: &mut ForwardCtx) -> Result<Var> {
        let gate = match ctx.se_gate_override {
            Some(v) => {
                let s = g.shape(x);
                g.input(Tensor::full(&[s[0], s[2]], v))
            }
            None => {
                let pooled = g.mean_time(x)?;
                let h = self.squeeze.forward(g, store, pooled)?;
                let h = g.relu(h);
                let e = self.excite.forward(g, store, h)?;
                g.sigmoid(e)
            }
        };
        ctx.se_gates.push(gate);
        g.channel_gate(x, gate)
    }
}

/// LSTM state update from already-activated gates:
/// `c = f*c_prev + i*cand`, `h = o*tanh(c)`.
pub fn lstm_cell(g: &mut Graph, input: Var, forget: Var, candidate: Var, output: Var, c_prev: Var) -> Result<(Var, Var)> {
    let keep = g.mul(forget, c_prev)?;
    let write = g.mul(input, candidate)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(output, tc)?;
    Ok((h, c))
}

fn split_gates(g: &mut Graph, pre: Var, units: usize) -> Result<(Var, Var, Var, Var)> {
    let i = g.slice_last(pre, 0, units)?;
    let f = g.slice_last(pre, units, units)?;
    let c = g.slice_last(pre, 2 * units, units)?;
    let o = g.slice_last(pre, 3 * units, units)?;
    Ok((g.sigmoid(i), g.sigmoid(f), g.tanh(c), g.sigmoid(o)))
}

fn forget_bias(units: usize) -> Tensor {
    let mut b = Tensor::zeros(&[4 * units]);
    b.data_mut()[units..2 * units].iter_mut().for_each(|v| *v = 1.0);
    b
}

/// One direction of a standard LSTM over `[B, T, F]` sequences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmCell {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub inputs: usize,
    pub units: usize,
}

impl LstmCell {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, inputs: usize, units: usize, rng: &mut R) -> Self {
        Self {
            wx: store.add_uniform(format!("{name}.wx"), &[inputs, 4 * units], inputs, 0.0, rng),
            wh: store.add_uniform(format!("{name}.wh"), &[units, 4 * units], units, 0.0, rng),
            b: store.add(format!("{name}.b"), forget_bias(units)),
            inputs,
            units,
        }
    }

    /// Runs over `seq` in the given time order and returns every hidden state in
    /// that processing order.
    fn run(&self, g: &mut Graph, store: &ParamStore, seq: Var, order: &[usize], rec_mask: Option<&Tensor>) -> Result<Vec<Var>> {
        let batch = g.shape(seq)[0];
        let wx = g.param(store, self.wx);
        let wh = g.param(store, self.wh);
        let b = g.param(store, self.b);
        let mut h = g.input(Tensor::zeros(&[batch, self.units]));
        let mut c = g.input(Tensor::zeros(&[batch, self.units]));
        let mut hs = Vec::with_capacity(order.len());
        for &t in order {
            let xt = g.select_step(seq, t)?;
            let h_in = match rec_mask {
                Some(m) => g.mul_const(h, m.clone())?,
                None => h,
            };
            let zx = g.matmul(xt, wx)?;
            let zh = g.matmul(h_in, wh)?;
            let z = g.add(zx, zh)?;
            let z = g.add_bias(z, b)?;
            let (i, f, cand, o) = split_gates(g, z, self.units)?;
            let (nh, nc) = lstm_cell(g, i, f, cand, o, c)?;
            h = nh;
            c = nc;
            hs.push(h);
        }
        Ok(hs)
    }
}

/// Bidirectional LSTM returning the concatenated final states `[B, 2*units]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiLstm {
    pub forward_cell: LstmCell,
    pub backward_cell: LstmCell,
    /// Input dropout, one mask per sequence.
    pub dropout: f64,
    pub recurrent_dropout: f64,
}

impl BiLstm {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, inputs: usize, units: usize, dropout: f64, recurrent_dropout: f64, rng: &mut R) -> Self {
        Self {
            forward_cell: LstmCell::new(store, &format!("{name}.fwd"), inputs, units, rng),
            backward_cell: LstmCell::new(store, &format!("{name}.bwd"), inputs, units, rng),
            dropout,
            recurrent_dropout,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, seq: Var, ctx: &mut ForwardCtx) -> Result<Var> {
        let shape = g.shape(seq).to_vec();
        if shape.len() != 3 || shape[2] != self.forward_cell.inputs {
            return Err(NetError::ShapeMismatch(format!("bilstm input {shape:?}")));
        }
        let (batch, steps, feats) = (shape[0], shape[1], shape[2]);
        let units = self.forward_cell.units;
        let mut outs = Vec::with_capacity(2);
        let forward_order: Vec<usize> = (0..steps).collect();
        let backward_order: Vec<usize> = (0..steps).rev().collect();
        for (cell, order) in [(&self.forward_cell, &forward_order), (&self.backward_cell, &backward_order)] {
            let input = if ctx.train && self.dropout > 0.0 {
                let m = ctx.sequence_mask(batch, steps, feats, self.dropout);
                g.mul_const(seq, m)?
            } else {
                seq
            };
            let rec = (ctx.train && self.recurrent_dropout > 0.0)
                .then(|| ctx.bernoulli_mask(&[batch, units], self.recurrent_dropout));
            let hs = cell.run(g, store, input, order, rec.as_ref())?;
            outs.push(*hs.last().expect("at least one step"));
        }
        g.concat(&outs)
    }
}

/// One direction of a convolutional LSTM whose state is `[B, A, filters]`; the
/// gate transforms are kernel-`k` convolutions along the articulation axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvLstmCell {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub channels: usize,
    pub filters: usize,
    pub kernel: usize,
}

impl ConvLstmCell {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, channels: usize, filters: usize, kernel: usize, rng: &mut R) -> Self {
        Self {
            wx: store.add_uniform(format!("{name}.wx"), &[kernel, channels, 4 * filters], kernel * channels, 0.0, rng),
            wh: store.add_uniform(format!("{name}.wh"), &[kernel, filters, 4 * filters], kernel * filters, 0.0, rng),
            b: store.add(format!("{name}.b"), forget_bias(filters)),
            channels,
            filters,
            kernel,
        }
    }

    fn run(&self, g: &mut Graph, store: &ParamStore, seq: Var, order: &[usize], rec_mask: Option<&Tensor>) -> Result<Vec<Var>> {
        let shape = g.shape(seq).to_vec();
        let (batch, articulations) = (shape[0], shape[2]);
        let wx = g.param(store, self.wx);
        let wh = g.param(store, self.wh);
        let b = g.param(store, self.b);
        let mut h = g.input(Tensor::zeros(&[batch, articulations, self.filters]));
        let mut c = g.input(Tensor::zeros(&[batch, articulations, self.filters]));
        let mut hs = Vec::with_capacity(order.len());
        for &t in order {
            let xt = g.select_step(seq, t)?;
            let h_in = match rec_mask {
                Some(m) => g.mul_const(h, m.clone())?,
                None => h,
            };
            let zx = g.conv1d(xt, wx, Some(b))?;
            let zh = g.conv1d(h_in, wh, None)?;
            let z = g.add(zx, zh)?;
            let (i, f, cand, o) = split_gates(g, z, self.filters)?;
            let (nh, nc) = lstm_cell(g, i, f, cand, o, c)?;
            h = nh;
            c = nc;
            hs.push(h);
        }
        Ok(hs)
    }
}

/// Bidirectional ConvLSTM over `[B, T, A, C]` returning sequences `[B, T, A, 2*filters]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiConvLstm1d {
    pub forward_cell: ConvLstmCell,
    pub backward_cell: ConvLstmCell,
    /// Variational dropout on the recurrent state, one mask per sequence.
    pub recurrent_dropout: f64,
}

impl BiConvLstm1d {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, channels: usize, filters: usize, kernel: usize, recurrent_dropout: f64, rng: &mut R) -> Self {
        Self {
            forward_cell: ConvLstmCell::new(store, &format!("{name}.fwd"), channels, filters, kernel, rng),
            backward_cell: ConvLstmCell::new(store, &format!("{name}.bwd"), channels, filters, kernel, rng),
            recurrent_dropout,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, seq: Var, ctx: &mut ForwardCtx) -> Result<Var> {
        let shape = g.shape(seq).to_vec();
        if shape.len() != 4 || shape[3] != self.forward_cell.channels {
            return Err(NetError::ShapeMismatch(format!("convlstm input {shape:?}")));
        }
        let (batch, steps, articulations) = (shape[0], shape[1], shape[2]);
        let filters = self.forward_cell.filters;
        let forward_order: Vec<usize> = (0..steps).collect();
        let backward_order: Vec<usize> = (0..steps).rev().collect();
        let mut seqs = Vec::with_capacity(2);
        for (cell, order) in [(&self.forward_cell, &forward_order), (&self.backward_cell, &backward_order)] {
            let rec = (ctx.train && self.recurrent_dropout > 0.0)
                .then(|| ctx.bernoulli_mask(&[batch, articulations, filters], self.recurrent_dropout));
            let mut hs = cell.run(g, store, seq, order, rec.as_ref())?;
            if order.first() != Some(&0) {
                hs.reverse();
            }
            seqs.push(g.stack_steps(&hs)?);
        }
        g.concat(&seqs)
    }
}
