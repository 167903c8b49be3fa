//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node holding its forward value; [`Graph::backward`]
//! walks the tape in reverse, accumulating vector-Jacobian products into a
//! gradient slot per node. Parameters are leaves tied to a [`ParamId`] so that
//! reused weights (recurrent cells) are a single node and their gradients sum.

use std::collections::HashMap;

use crate::error::{NetError, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const BN_EPS: f64 = 1e-3;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Tensor),
    AddConst(Var),
    Relu(Var),
    Silu(Var),
    Sigmoid(Var),
    Tanh(Var),
    OneMinus(Var),
    Conv1d { x: Var, w: Var, b: Option<Var> },
    MaxPool1d { x: Var, argmax: Vec<usize> },
    Concat { parts: Vec<Var> },
    Reshape(Var),
    MeanTime(Var),
    ChannelGate { x: Var, gate: Var },
    BatchNormTrain { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    BatchNormEval { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    SelectStep { x: Var, t: usize },
    Stack(Vec<Var>),
    SliceLast { x: Var, start: usize },
    SumSquares(Var),
    Sum(Var),
    BceWithLogits { z: Var, targets: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Batch statistics observed by a training-mode batch norm, for running averages.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn last_dim(t: &Tensor) -> usize {
    *t.shape().last().expect("tensor has at least one axis")
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A leaf whose gradient can be read back (inputs, constants).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Leaf);
        self.params.insert(id, v);
        v
    }

    pub fn param_vars(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.params.iter().map(|(&id, &v)| (id, v))
    }

    fn check_same(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(NetError::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    /// `[n,k] x [k,m] -> [n,m]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(NetError::ShapeMismatch(format!("matmul {sa:?} x {sb:?}")));
        }
        let (n, k, m) = (sa[0], sa[1], sb[1]);
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                for (o, w) in row.iter_mut().zip(&bv[p * m..(p + 1) * m]) {
                    *o += x * w;
                }
            }
        }
        let value = Tensor::new(vec![n, m], out)?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// Adds a `[m]` bias along the last axis of `a`.
    pub fn add_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        let m = last_dim(self.value(a));
        if self.shape(b) != [m] {
            return Err(NetError::ShapeMismatch(format!(
                "bias {:?} for input {:?}",
                self.shape(b),
                self.shape(a)
            )));
        }
        let bv = self.value(b).data().to_vec();
        let mut value = self.value(a).clone();
        for chunk in value.data_mut().chunks_mut(m) {
            for (v, bb) in chunk.iter_mut().zip(&bv) {
                *v += bb;
            }
        }
        Ok(self.push(value, Op::AddBias(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "add")?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "mul")?;
        let bv = self.value(b).data();
        let data = self.value(a).data().iter().zip(bv).map(|(x, y)| x * y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|v| v * c);
        self.push(value, Op::Scale(a, c))
    }

    /// Element-wise product with a constant (dropout masks).
    pub fn mul_const(&mut self, a: Var, mask: Tensor) -> Result<Var> {
        if mask.shape() != self.shape(a) {
            return Err(NetError::ShapeMismatch(format!(
                "mask {:?} for {:?}",
                mask.shape(),
                self.shape(a)
            )));
        }
        let data = self.value(a).data().iter().zip(mask.data()).map(|(x, m)| x * m).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::MulConst(a, mask)))
    }

    /// Adds a constant (additive noise); the gradient passes through unchanged.
    pub fn add_const(&mut self, a: Var, c: &Tensor) -> Result<Var> {
        if c.shape() != self.shape(a) {
            return Err(NetError::ShapeMismatch(format!(
                "constant {:?} for {:?}",
                c.shape(),
                self.shape(a)
            )));
        }
        let mut value = self.value(a).clone();
        value.add_assign(c);
        Ok(self.push(value, Op::AddConst(a)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| if v < 0.0 { 0.0 } else { v });
        self.push(value, Op::Relu(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v * sigmoid(v));
        self.push(value, Op::Silu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| 1.0 - v);
        self.push(value, Op::OneMinus(a))
    }

    /// "Same"-padded, stride-1 convolution along axis 1 of a `[B, L, Cin]` input.
    /// Weights are `[K, Cin, Cout]`, bias `[Cout]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 3 || sw.len() != 3 || sx[2] != sw[1] {
            return Err(NetError::ShapeMismatch(format!("conv1d input {sx:?} weights {sw:?}")));
        }
        let (batch, len, cin) = (sx[0], sx[1], sx[2]);
        let (k, cout) = (sw[0], sw[2]);
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(NetError::ShapeMismatch(format!("conv1d bias {:?}", self.shape(b))));
            }
        }
        let pad = (k - 1) / 2;
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = vec![0.0; batch * len * cout];
        if let Some(b) = b {
            let bv = self.value(b).data();
            for row in out.chunks_mut(cout) {
                row.copy_from_slice(bv);
            }
        }
        for bi in 0..batch {
            for t in 0..len {
                let orow = &mut out[(bi * len + t) * cout..(bi * len + t + 1) * cout];
                for kk in 0..k {
                    let src = t + kk;
                    if src < pad || src - pad >= len {
                        continue;
                    }
                    let s = src - pad;
                    let xrow = &xv[(bi * len + s) * cin..(bi * len + s + 1) * cin];
                    for (ci, &xval) in xrow.iter().enumerate() {
                        let wrow = &wv[(kk * cin + ci) * cout..(kk * cin + ci + 1) * cout];
                        for (o, wval) in orow.iter_mut().zip(wrow) {
                            *o += xval * wval;
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![batch, len, cout], out)?;
        Ok(self.push(value, Op::Conv1d { x, w, b }))
    }

    /// Width-3, stride-1 max pooling along axis 1 of `[B, L, C]`, edges padded with -inf.
    pub fn maxpool3(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x);
        if sx.len() != 3 {
            return Err(NetError::ShapeMismatch(format!("maxpool input {sx:?}")));
        }
        let (batch, len, c) = (sx[0], sx[1], sx[2]);
        let xv = self.value(x).data();
        let mut out = vec![0.0; xv.len()];
        let mut argmax = vec![0usize; xv.len()];
        for bi in 0..batch {
            for t in 0..len {
                let lo = t.saturating_sub(1);
                let hi = (t + 1).min(len - 1);
                for ch in 0..c {
                    let mut best = lo;
                    for s in lo..=hi {
                        if xv[(bi * len + s) * c + ch] > xv[(bi * len + best) * c + ch] {
                            best = s;
                        }
                    }
                    let o = (bi * len + t) * c + ch;
                    argmax[o] = (bi * len + best) * c + ch;
                    out[o] = xv[argmax[o]];
                }
            }
        }
        let value = Tensor::new(vec![batch, len, c], out)?;
        Ok(self.push(value, Op::MaxPool1d { x, argmax }))
    }

    /// Concatenates along the last axis; leading axes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| NetError::ShapeMismatch("concat of nothing".into()))?;
        let lead = self.shape(*first)[..self.shape(*first).len() - 1].to_vec();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s[..s.len() - 1] != lead[..] {
                return Err(NetError::ShapeMismatch(format!("concat {:?} with {s:?}", lead)));
            }
            widths.push(s[s.len() - 1]);
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Concat { parts: parts.to_vec() }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Mean over axis 1: `[B, L, C] -> [B, C]`.
    pub fn mean_time(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x);
        if sx.len() != 3 {
            return Err(NetError::ShapeMismatch(format!("mean_time input {sx:?}")));
        }
        let (batch, len, c) = (sx[0], sx[1], sx[2]);
        let xv = self.value(x).data();
        let mut out = vec![0.0; batch * c];
        for bi in 0..batch {
            for t in 0..len {
                for ch in 0..c {
                    out[bi * c + ch] += xv[(bi * len + t) * c + ch];
                }
            }
        }
        out.iter_mut().for_each(|v| *v /= len as f64);
        let value = Tensor::new(vec![batch, c], out)?;
        Ok(self.push(value, Op::MeanTime(x)))
    }

    /// `x[b,t,c] * gate[b,c]`
    pub fn channel_gate(&mut self, x: Var, gate: Var) -> Result<Var> {
        let (sx, sg) = (self.shape(x), self.shape(gate));
        if sx.len() != 3 || sg != [sx[0], sx[2]] {
            return Err(NetError::ShapeMismatch(format!("gate {sg:?} for {sx:?}")));
        }
        let (batch, len, c) = (sx[0], sx[1], sx[2]);
        let gv = self.value(gate).data();
        let mut value = self.value(x).clone();
        let d = value.data_mut();
        for bi in 0..batch {
            for t in 0..len {
                for ch in 0..c {
                    d[(bi * len + t) * c + ch] *= gv[bi * c + ch];
                }
            }
        }
        Ok(self.push(value, Op::ChannelGate { x, gate }))
    }

    /// Training-mode batch normalisation: per channel (last axis), statistics over
    /// every other position. Returns the output and the observed batch statistics.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var) -> Result<(Var, BatchStats)> {
        let c = last_dim(self.value(x));
        self.check_bn(x, gamma, beta, c)?;
        let xv = self.value(x).data();
        let n = xv.len() / c;
        let mut mean = vec![0.0; c];
        for row in xv.chunks(c) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; c];
        for row in xv.chunks(c) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let (xhat, out) = self.bn_apply(x, gamma, beta, &mean, &inv_std);
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        let v = self.push(value, Op::BatchNormTrain { x, gamma, beta, xhat, inv_std });
        Ok((v, BatchStats { mean, var }))
    }

    /// Inference-mode batch normalisation with fixed statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
    ) -> Result<Var> {
        let c = last_dim(self.value(x));
        self.check_bn(x, gamma, beta, c)?;
        if mean.len() != c || var.len() != c {
            return Err(NetError::ShapeMismatch("batch norm statistics width".into()));
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let (xhat, out) = self.bn_apply(x, gamma, beta, mean, &inv_std);
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(value, Op::BatchNormEval { x, gamma, beta, xhat, inv_std }))
    }

    fn check_bn(&self, _x: Var, gamma: Var, beta: Var, c: usize) -> Result<()> {
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(NetError::ShapeMismatch(format!(
                "batch norm affine {:?}/{:?} for width {c}",
                self.shape(gamma),
                self.shape(beta)
            )));
        }
        Ok(())
    }

    fn bn_apply(&self, x: Var, gamma: Var, beta: Var, mean: &[f64], inv_std: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let c = mean.len();
        let xv = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0; xv.len()];
        let mut out = vec![0.0; xv.len()];
        for (i, v) in xv.iter().enumerate() {
            let ch = i % c;
            xhat[i] = (v - mean[ch]) * inv_std[ch];
            out[i] = g[ch] * xhat[i] + b[ch];
        }
        (xhat, out)
    }

    /// `[B, T, rest..] -> [B, rest..]` at step `t`.
    pub fn select_step(&mut self, x: Var, t: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() < 2 || t >= sx[1] {
            return Err(NetError::ShapeMismatch(format!("select step {t} of {sx:?}")));
        }
        let inner: usize = sx[2..].iter().product();
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(sx[0] * inner);
        for bi in 0..sx[0] {
            let start = (bi * sx[1] + t) * inner;
            out.extend_from_slice(&xv[start..start + inner]);
        }
        let mut shape = vec![sx[0]];
        shape.extend_from_slice(&sx[2..]);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::SelectStep { x, t }))
    }

    /// Inverse of [`Graph::select_step`]: `T x [B, rest..] -> [B, T, rest..]`.
    pub fn stack_steps(&mut self, steps: &[Var]) -> Result<Var> {
        let first = *steps
            .first()
            .ok_or_else(|| NetError::ShapeMismatch("stack of nothing".into()))?;
        let s0 = self.shape(first).to_vec();
        for &s in steps {
            self.check_same(first, s, "stack_steps")?;
        }
        let inner: usize = s0[1..].iter().product();
        let t_len = steps.len();
        let mut out = vec![0.0; s0[0] * t_len * inner];
        for (t, &s) in steps.iter().enumerate() {
            let sv = self.value(s).data();
            for bi in 0..s0[0] {
                let dst = (bi * t_len + t) * inner;
                out[dst..dst + inner].copy_from_slice(&sv[bi * inner..(bi + 1) * inner]);
            }
        }
        let mut shape = vec![s0[0], t_len];
        shape.extend_from_slice(&s0[1..]);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Stack(steps.to_vec())))
    }

    /// Columns `start..start+len` of the last axis.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let w = *sx.last().unwrap_or(&0);
        if start + len > w || len == 0 {
            return Err(NetError::ShapeMismatch(format!("slice {start}+{len} of width {w}")));
        }
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(xv.len() / w * len);
        for row in xv.chunks(w) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let mut shape = sx;
        *shape.last_mut().expect("non-empty shape") = len;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::SliceLast { x, start }))
    }

    /// `sum(x^2)` as a `[1]` tensor.
    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|v| v * v).sum();
        self.push(Tensor::scalar(s), Op::SumSquares(x))
    }

    /// Sum of all entries as a `[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Mean binary cross-entropy of logits `[B, 1]` (or `[B]`) against 0/1 targets.
    pub fn bce_with_logits(&mut self, z: Var, targets: &[f64]) -> Result<Var> {
        let zv = self.value(z).data();
        if zv.len() != targets.len() {
            return Err(NetError::ShapeMismatch(format!(
                "{} logits for {} targets",
                zv.len(),
                targets.len()
            )));
        }
        let n = zv.len() as f64;
        let loss: f64 = zv
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        let targets = targets.to_vec();
        Ok(self.push(Tensor::scalar(loss), Op::BceWithLogits { z, targets }))
    }

    /// Gradients of the sum of `output`'s entries with respect to every node.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        self.backward_with(output, Tensor::full(self.shape(output), 1.0))
    }

    /// Reverse sweep seeded with an explicit output cotangent.
    pub fn backward_with(&self, output: Var, seed: Tensor) -> Result<Gradients> {
        if output.0 >= self.nodes.len() {
            return Err(NetError::GraphNotRecorded);
        }
        if seed.shape() != self.shape(output) {
            return Err(NetError::ShapeMismatch("backward seed shape".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);
        for idx in (0..=output.0).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            self.propagate(idx, &gy, &mut grads);
            grads[idx] = Some(gy);
        }
        let params = self.params.iter().map(|(&id, &v)| (id, v)).collect();
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, idx: usize, gy: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let g = gy.data();
        let mut acc = |v: Var, delta: Vec<f64>| {
            let slot = &mut grads[v.0];
            match slot {
                Some(t) => {
                    for (a, d) in t.data_mut().iter_mut().zip(&delta) {
                        *a += d;
                    }
                }
                None => {
                    *slot = Some(
                        Tensor::new(self.nodes[v.0].value.shape().to_vec(), delta)
                            .expect("gradient matches value shape"),
                    )
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (n, k, m) = (sa[0], sa[1], sb[1]);
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let mut da = vec![0.0; n * k];
                let mut db = vec![0.0; k * m];
                for i in 0..n {
                    let grow = &g[i * m..(i + 1) * m];
                    for p in 0..k {
                        let brow = &bv[p * m..(p + 1) * m];
                        da[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        let x = av[i * k + p];
                        if x != 0.0 {
                            for (d, gv) in db[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *d += x * gv;
                            }
                        }
                    }
                }
                acc(*a, da);
                acc(*b, db);
            }
            Op::AddBias(a, b) => {
                let m = self.shape(*b)[0];
                let mut db = vec![0.0; m];
                for row in g.chunks(m) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                acc(*a, g.to_vec());
                acc(*b, db);
            }
            Op::Add(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                acc(*a, g.iter().zip(bv).map(|(x, y)| x * y).collect());
                acc(*b, g.iter().zip(av).map(|(x, y)| x * y).collect());
            }
            Op::Scale(a, c) => acc(*a, g.iter().map(|v| v * c).collect()),
            Op::MulConst(a, mask) => acc(*a, g.iter().zip(mask.data()).map(|(x, m)| x * m).collect()),
            Op::AddConst(a) => acc(*a, g.to_vec()),
            Op::Relu(a) => {
                let av = self.value(*a).data();
                acc(*a, g.iter().zip(av).map(|(gv, x)| if *x > 0.0 { *gv } else { 0.0 }).collect());
            }
            Op::Silu(a) => {
                let av = self.value(*a).data();
                acc(
                    *a,
                    g.iter()
                        .zip(av)
                        .map(|(gv, &x)| {
                            let s = sigmoid(x);
                            gv * (s + x * s * (1.0 - s))
                        })
                        .collect(),
                );
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                acc(*a, g.iter().zip(y).map(|(gv, s)| gv * s * (1.0 - s)).collect());
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                acc(*a, g.iter().zip(y).map(|(gv, t)| gv * (1.0 - t * t)).collect());
            }
            Op::OneMinus(a) => acc(*a, g.iter().map(|v| -v).collect()),
            Op::Conv1d { x, w, b } => {
                let (sx, sw) = (self.shape(*x), self.shape(*w));
                let (batch, len, cin) = (sx[0], sx[1], sx[2]);
                let (k, cout) = (sw[0], sw[2]);
                let pad = (k - 1) / 2;
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                let mut dx = vec![0.0; xv.len()];
                let mut dw = vec![0.0; wv.len()];
                for bi in 0..batch {
                    for t in 0..len {
                        let grow = &g[(bi * len + t) * cout..(bi * len + t + 1) * cout];
                        for kk in 0..k {
                            let src = t + kk;
                            if src < pad || src - pad >= len {
                                continue;
                            }
                            let s = src - pad;
                            let base = (bi * len + s) * cin;
                            for ci in 0..cin {
                                let woff = (kk * cin + ci) * cout;
                                let wrow = &wv[woff..woff + cout];
                                dx[base + ci] += grow.iter().zip(wrow).map(|(a, b)| a * b).sum::<f64>();
                                let xval = xv[base + ci];
                                if xval != 0.0 {
                                    for (d, gv) in dw[woff..woff + cout].iter_mut().zip(grow) {
                                        *d += xval * gv;
                                    }
                                }
                            }
                        }
                    }
                }
                acc(*x, dx);
                acc(*w, dw);
                if let Some(b) = b {
                    let mut db = vec![0.0; cout];
                    for row in g.chunks(cout) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    acc(*b, db);
                }
            }
            Op::MaxPool1d { x, argmax } => {
                let mut dx = vec![0.0; self.value(*x).len()];
                for (o, &src) in argmax.iter().enumerate() {
                    dx[src] += g[o];
                }
                acc(*x, dx);
            }
            Op::Concat { parts } => {
                let widths: Vec<usize> = parts.iter().map(|p| last_dim(self.value(*p))).collect();
                let total: usize = widths.iter().sum();
                let rows = g.len() / total;
                let mut deltas: Vec<Vec<f64>> =
                    widths.iter().map(|w| Vec::with_capacity(rows * w)).collect();
                for r in 0..rows {
                    let mut off = r * total;
                    for (d, &w) in deltas.iter_mut().zip(&widths) {
                        d.extend_from_slice(&g[off..off + w]);
                        off += w;
                    }
                }
                for (p, d) in parts.iter().zip(deltas) {
                    acc(*p, d);
                }
            }
            Op::Reshape(x) => acc(*x, g.to_vec()),
            Op::MeanTime(x) => {
                let sx = self.shape(*x);
                let (batch, len, c) = (sx[0], sx[1], sx[2]);
                let mut dx = vec![0.0; batch * len * c];
                for bi in 0..batch {
                    for t in 0..len {
                        for ch in 0..c {
                            dx[(bi * len + t) * c + ch] = g[bi * c + ch] / len as f64;
                        }
                    }
                }
                acc(*x, dx);
            }
            Op::ChannelGate { x, gate } => {
                let sx = self.shape(*x);
                let (batch, len, c) = (sx[0], sx[1], sx[2]);
                let xv = self.value(*x).data();
                let gv = self.value(*gate).data();
                let mut dx = vec![0.0; xv.len()];
                let mut dg = vec![0.0; gv.len()];
                for bi in 0..batch {
                    for t in 0..len {
                        for ch in 0..c {
                            let i = (bi * len + t) * c + ch;
                            dx[i] = g[i] * gv[bi * c + ch];
                            dg[bi * c + ch] += g[i] * xv[i];
                        }
                    }
                }
                acc(*x, dx);
                acc(*gate, dg);
            }
            Op::BatchNormTrain { x, gamma, beta, xhat, inv_std } => {
                let c = inv_std.len();
                let n = (xhat.len() / c) as f64;
                let gam = self.value(*gamma).data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut sum_dxhat = vec![0.0; c];
                let mut sum_dxhat_xhat = vec![0.0; c];
                for (i, gv) in g.iter().enumerate() {
                    let ch = i % c;
                    dgamma[ch] += gv * xhat[i];
                    dbeta[ch] += gv;
                    let dxh = gv * gam[ch];
                    sum_dxhat[ch] += dxh;
                    sum_dxhat_xhat[ch] += dxh * xhat[i];
                }
                let dx = g
                    .iter()
                    .enumerate()
                    .map(|(i, gv)| {
                        let ch = i % c;
                        let dxh = gv * gam[ch];
                        inv_std[ch] / n * (n * dxh - sum_dxhat[ch] - xhat[i] * sum_dxhat_xhat[ch])
                    })
                    .collect();
                acc(*x, dx);
                acc(*gamma, dgamma);
                acc(*beta, dbeta);
            }
            Op::BatchNormEval { x, gamma, beta, xhat, inv_std } => {
                let c = inv_std.len();
                let gam = self.value(*gamma).data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut dx = vec![0.0; g.len()];
                for (i, gv) in g.iter().enumerate() {
                    let ch = i % c;
                    dgamma[ch] += gv * xhat[i];
                    dbeta[ch] += gv;
                    dx[i] = gv * gam[ch] * inv_std[ch];
                }
                acc(*x, dx);
                acc(*gamma, dgamma);
                acc(*beta, dbeta);
            }
            Op::SelectStep { x, t } => {
                let sx = self.shape(*x);
                let inner: usize = sx[2..].iter().product();
                let mut dx = vec![0.0; self.value(*x).len()];
                for bi in 0..sx[0] {
                    let dst = (bi * sx[1] + t) * inner;
                    dx[dst..dst + inner].copy_from_slice(&g[bi * inner..(bi + 1) * inner]);
                }
                acc(*x, dx);
            }
            Op::Stack(steps) => {
                let s = node.value.shape();
                let (batch, t_len) = (s[0], s[1]);
                let inner: usize = s[2..].iter().product();
                for (t, step) in steps.iter().enumerate() {
                    let mut d = Vec::with_capacity(batch * inner);
                    for bi in 0..batch {
                        let src = (bi * t_len + t) * inner;
                        d.extend_from_slice(&g[src..src + inner]);
                    }
                    acc(*step, d);
                }
            }
            Op::SliceLast { x, start } => {
                let w = last_dim(self.value(*x));
                let len = last_dim(&node.value);
                let mut dx = vec![0.0; self.value(*x).len()];
                for (r, grow) in g.chunks(len).enumerate() {
                    dx[r * w + start..r * w + start + len].copy_from_slice(grow);
                }
                acc(*x, dx);
            }
            Op::SumSquares(x) => {
                let xv = self.value(*x).data();
                acc(*x, xv.iter().map(|v| 2.0 * v * g[0]).collect());
            }
            Op::Sum(x) => acc(*x, vec![g[0]; self.value(*x).len()]),
            Op::BceWithLogits { z, targets } => {
                let n = targets.len() as f64;
                let zv = self.value(*z).data();
                acc(
                    *z,
                    zv.iter().zip(targets).map(|(&zz, &y)| g[0] * (sigmoid(zz) - y) / n).collect(),
                );
            }
        }
    }
}

/// Result of a reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` when `v` does not influence the output.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient with respect to `v`, zero-filled when `v` does not influence the output.
    pub fn get_or_zero(&self, g: &Graph, v: Var) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(g.shape(v)))
    }

    /// Gradients of every parameter leaf that took part in the graph, in id order.
    pub fn param_grads(&self, g: &Graph) -> Vec<(ParamId, Tensor)> {
        let mut out: Vec<(ParamId, Tensor)> =
            self.params.iter().map(|&(id, v)| (id, self.get_or_zero(g, v))).collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }
}
