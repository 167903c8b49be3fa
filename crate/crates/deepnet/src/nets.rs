use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::graph::{Graph, Var};
use crate::layers::{
    dropout, gaussian_noise, BatchNorm, BiConvLstm1d, BiLstm, Dense, ForwardCtx, InceptionResidual,
    SqueezeExcitation,
};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// A batch of network inputs: stance blocks `[B, T, A, C]` and optional point values `[B, P]`.
#[derive(Debug, Clone)]
pub struct NetInput {
    pub stance: Tensor,
    pub points: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct NetOutput {
    pub stance: Var,
    pub points: Option<Var>,
    pub logit: Var,
    pub prob: Var,
    /// Named intermediate activations (`[B, L, channels]` conv maps).
    pub taps: Vec<(&'static str, Var)>,
}

impl NetOutput {
    pub fn tap(&self, name: &str) -> Option<Var> {
        self.taps.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

pub trait Network {
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    /// `(T, A, C)`
    fn input_dims(&self) -> (usize, usize, usize);
    fn point_dims(&self) -> Option<usize>;

    /// Forward from inputs already on the tape (`[B, T, A, C]` and `[B, P]`).
    fn forward_vars(&self, g: &mut Graph, stance: Var, points: Option<Var>, ctx: &mut ForwardCtx) -> Result<NetOutput>;

    fn forward(&self, g: &mut Graph, input: NetInput, ctx: &mut ForwardCtx) -> Result<NetOutput> {
        let stance = g.input(input.stance);
        let points = input.points.map(|p| g.input(p));
        self.forward_vars(g, stance, points, ctx)
    }
}

fn check_input(net: &dyn Network, g: &Graph, stance: Var, points: Option<Var>) -> Result<usize> {
    let (t, a, c) = net.input_dims();
    let s = g.shape(stance);
    if s.len() != 4 || s[1..] != [t, a, c] {
        return Err(NetError::ShapeMismatch(format!("stance {s:?}, network expects [B, {t}, {a}, {c}]")));
    }
    match (net.point_dims(), points) {
        (Some(_), None) => return Err(NetError::MissingBranchInput),
        (None, Some(_)) => return Err(NetError::UnexpectedBranchInput),
        (Some(p), Some(pts)) if g.shape(pts) != [s[0], p] => {
            return Err(NetError::ShapeMismatch(format!("points {:?}, expected [{}, {p}]", g.shape(pts), s[0])));
        }
        _ => {}
    }
    Ok(s[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub time_steps: usize,
    pub structures: usize,
    pub channels: usize,
    /// Width of the point-value branch input; `None` builds the time-series-only network.
    pub point_dims: Option<usize>,
    pub filters: usize,
    pub noise_std: f64,
    pub dropout: f64,
    pub se_reduction: usize,
    pub branch_widths: (usize, usize),
    pub head_width: usize,
    pub l2: f64,
    pub seed: u64,
}

impl CnnConfig {
    pub fn new(structures: usize, channels: usize, point_dims: Option<usize>) -> Self {
        Self {
            time_steps: 101,
            structures,
            channels,
            point_dims,
            filters: 64,
            noise_std: 0.05,
            dropout: 0.3,
            se_reduction: 16,
            branch_widths: (8, 16),
            head_width: 16,
            l2: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PointBranch {
    dense1: Dense,
    bn1: BatchNorm,
    dense2: Dense,
    bn2: BatchNorm,
}

/// Dual-branch CNN: noise -> Inception-residual -> SE -> dropout -> Inception-residual
/// -> SE -> flatten, optionally fused with a dense point-value branch, then a
/// dense/batch-norm/SiLU head and a sigmoid output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CnnNet {
    pub config: CnnConfig,
    store: ParamStore,
    block1: InceptionResidual,
    se1: SqueezeExcitation,
    block2: InceptionResidual,
    se2: SqueezeExcitation,
    points: Option<PointBranch>,
    head: Dense,
    head_bn: BatchNorm,
    out: Dense,
}

impl CnnNet {
    pub fn new(config: CnnConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let cin = config.structures * config.channels;
        let f = config.filters;
        let block1 = InceptionResidual::new(&mut store, "block1", cin, f, &mut rng)?;
        let se1 = SqueezeExcitation::new(&mut store, "se1", f, config.se_reduction, &mut rng);
        let block2 = InceptionResidual::new(&mut store, "block2", f, f, &mut rng)?;
        let se2 = SqueezeExcitation::new(&mut store, "se2", f, config.se_reduction, &mut rng);
        let (w1, w2) = config.branch_widths;
        let points = config.point_dims.map(|p| PointBranch {
            dense1: Dense::new(&mut store, "points.dense1", p, w1, config.l2, &mut rng),
            bn1: BatchNorm::new(&mut store, "points.bn1", w1),
            dense2: Dense::new(&mut store, "points.dense2", w1, w2, 0.0, &mut rng),
            bn2: BatchNorm::new(&mut store, "points.bn2", w2),
        });
        let fused = config.time_steps * f + config.point_dims.map_or(0, |_| w2);
        let head = Dense::new(&mut store, "head", fused, config.head_width, config.l2, &mut rng);
        let head_bn = BatchNorm::new(&mut store, "head.bn", config.head_width);
        let out = Dense::new(&mut store, "out", config.head_width, 1, 0.0, &mut rng);
        Ok(Self { config, store, block1, se1, block2, se2, points, head, head_bn, out })
    }
}

impl Network for CnnNet {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn input_dims(&self) -> (usize, usize, usize) {
        (self.config.time_steps, self.config.structures, self.config.channels)
    }

    fn point_dims(&self) -> Option<usize> {
        self.config.point_dims
    }

    fn forward_vars(&self, g: &mut Graph, stance: Var, points: Option<Var>, ctx: &mut ForwardCtx) -> Result<NetOutput> {
        let batch = check_input(self, g, stance, points)?;
        let cfg = &self.config;
        let s = &self.store;
        let x = g.reshape(stance, &[batch, cfg.time_steps, cfg.structures * cfg.channels])?;
        let x = gaussian_noise(g, x, cfg.noise_std, ctx)?;
        let b1 = self.block1.forward(g, s, x)?;
        let x = self.se1.forward(g, s, b1, ctx)?;
        let x = dropout(g, x, cfg.dropout, ctx)?;
        let b2 = self.block2.forward(g, s, x)?;
        let x = self.se2.forward(g, s, b2, ctx)?;
        let flat = g.reshape(x, &[batch, cfg.time_steps * cfg.filters])?;
        let fused = match (&self.points, points) {
            (Some(br), Some(pv)) => {
                let h = br.dense1.forward(g, s, pv)?;
                let h = br.bn1.forward(g, s, h, ctx)?;
                let h = g.silu(h);
                let h = dropout(g, h, cfg.dropout, ctx)?;
                let h = br.dense2.forward(g, s, h)?;
                let h = br.bn2.forward(g, s, h, ctx)?;
                let h = g.silu(h);
                g.concat(&[flat, h])?
            }
            _ => flat,
        };
        let h = self.head.forward(g, s, fused)?;
        let h = self.head_bn.forward(g, s, h, ctx)?;
        let h = g.silu(h);
        let logit = self.out.forward(g, s, h)?;
        let prob = g.sigmoid(logit);
        Ok(NetOutput { stance, points, logit, prob, taps: vec![("block1", b1), ("block2", b2)] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub time_steps: usize,
    pub structures: usize,
    pub channels: usize,
    pub conv_filters: usize,
    pub conv_kernel: usize,
    pub recurrent_dropout: f64,
    pub lstm_units: usize,
    pub lstm_dropout: f64,
    pub dense_width: usize,
    pub seed: u64,
}

impl LstmConfig {
    pub fn new(structures: usize, channels: usize) -> Self {
        Self {
            time_steps: 101,
            structures,
            channels,
            conv_filters: 30,
            conv_kernel: 3,
            recurrent_dropout: 0.4,
            lstm_units: 20,
            lstm_dropout: 0.2,
            dense_width: 10,
            seed: 0,
        }
    }
}

/// Bidirectional ConvLSTM over the articulation axis, per-step flatten,
/// bidirectional LSTM (final states), dense ReLU, sigmoid output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmNet {
    pub config: LstmConfig,
    store: ParamStore,
    conv_lstm: BiConvLstm1d,
    lstm: BiLstm,
    dense: Dense,
    out: Dense,
}

impl LstmNet {
    pub fn new(config: LstmConfig) -> Result<Self> {
        if config.structures == 0 || config.channels == 0 {
            return Err(NetError::InvalidConfig("A and C must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let conv_lstm = BiConvLstm1d::new(
            &mut store,
            "convlstm",
            config.channels,
            config.conv_filters,
            config.conv_kernel,
            config.recurrent_dropout,
            &mut rng,
        );
        let per_step = config.structures * 2 * config.conv_filters;
        let lstm = BiLstm::new(&mut store, "lstm", per_step, config.lstm_units, config.lstm_dropout, 0.0, &mut rng);
        let dense = Dense::new(&mut store, "dense", 2 * config.lstm_units, config.dense_width, 0.0, &mut rng);
        let out = Dense::new(&mut store, "out", config.dense_width, 1, 0.0, &mut rng);
        Ok(Self { config, store, conv_lstm, lstm, dense, out })
    }
}

/// Builds the recurrent network with its default widths for `(A, C)` inputs.
pub fn build_lstm_net(structures: usize, channels: usize) -> Result<LstmNet> {
    LstmNet::new(LstmConfig::new(structures, channels))
}

impl Network for LstmNet {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn input_dims(&self) -> (usize, usize, usize) {
        (self.config.time_steps, self.config.structures, self.config.channels)
    }

    fn point_dims(&self) -> Option<usize> {
        None
    }

    fn forward_vars(&self, g: &mut Graph, stance: Var, points: Option<Var>, ctx: &mut ForwardCtx) -> Result<NetOutput> {
        let batch = check_input(self, g, stance, points)?;
        let cfg = &self.config;
        let s = &self.store;
        let seq = self.conv_lstm.forward(g, s, stance, ctx)?;
        let flat = g.reshape(seq, &[batch, cfg.time_steps, cfg.structures * 2 * cfg.conv_filters])?;
        let latent = self.lstm.forward(g, s, flat, ctx)?;
        let h = self.dense.forward(g, s, latent)?;
        let h = g.relu(h);
        let logit = self.out.forward(g, s, h)?;
        let prob = g.sigmoid(logit);
        Ok(NetOutput { stance, points: None, logit, prob, taps: vec![("convlstm", seq)] })
    }
}
