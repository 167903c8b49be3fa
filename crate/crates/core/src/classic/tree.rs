use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    All,
}

impl MaxFeatures {
    pub fn count(self, d: usize) -> usize {
        let k = match self {
            Self::Sqrt => (d as f64).sqrt() as usize,
            Self::Log2 => (d as f64).log2() as usize,
            Self::All => d,
        };
        k.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitter {
    Best,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
    Entropy,
    /// Same impurity as entropy for binary targets.
    LogLoss,
}

impl Criterion {
    fn impurity(self, pos: f64, total: f64) -> f64 {
        if total <= 0.0 {
            return 0.0;
        }
        let p = (pos / total).clamp(0.0, 1.0);
        match self {
            Self::Gini => 2.0 * p * (1.0 - p),
            Self::Entropy | Self::LogLoss => {
                let h = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
                h(p) + h(1.0 - p)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub splitter: Splitter,
    pub max_features: MaxFeatures,
    pub criterion: Criterion,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            splitter: Splitter::Best,
            max_features: MaxFeatures::All,
            criterion: Criterion::Gini,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf { p: f64, samples: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// CART classifier; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    w: &'a [f64],
    params: TreeParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

const PURE: f64 = 1e-15;

impl Builder<'_> {
    fn totals(&self, idx: &[usize]) -> (f64, f64) {
        idx.iter().fold((0.0, 0.0), |(p, t), &i| (p + if self.y[i] == 1 { self.w[i] } else { 0.0 }, t + self.w[i]))
    }

    fn leaf(&mut self, idx: &[usize]) -> usize {
        let (pos, tot) = self.totals(idx);
        let p = if tot > 0.0 {
            pos / tot
        } else {
            idx.iter().filter(|&&i| self.y[i] == 1).count() as f64 / idx.len().max(1) as f64
        };
        self.nodes.push(Node::Leaf { p, samples: idx.len() });
        self.nodes.len() - 1
    }

    fn score(&self, left: (f64, f64), total: (f64, f64), parent: f64) -> f64 {
        let right = (total.0 - left.0, total.1 - left.1);
        let c = self.params.criterion;
        parent - (left.1 / total.1) * c.impurity(left.0, left.1) - (right.1 / total.1) * c.impurity(right.0, right.1)
    }

    fn best_on(&mut self, f: usize, idx: &[usize], total: (f64, f64), parent: f64) -> Option<Candidate> {
        let leaf = self.params.min_samples_leaf;
        let n = idx.len();
        match self.params.splitter {
            Splitter::Best => {
                let mut order = idx.to_vec();
                order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
                let mut left = (0.0, 0.0);
                let mut best: Option<Candidate> = None;
                for k in 0..n - 1 {
                    let i = order[k];
                    left.0 += if self.y[i] == 1 { self.w[i] } else { 0.0 };
                    left.1 += self.w[i];
                    let (lo, hi) = (self.x[i][f], self.x[order[k + 1]][f]);
                    if lo >= hi || k + 1 < leaf || n - k - 1 < leaf || left.1 <= 0.0 || total.1 - left.1 <= 0.0 {
                        continue;
                    }
                    let gain = self.score(left, total, parent);
                    if best.as_ref().is_none_or(|b| gain > b.gain) {
                        let mid = lo + (hi - lo) / 2.0;
                        let threshold = if mid >= hi { lo } else { mid };
                        best = Some(Candidate { feature: f, threshold, gain });
                    }
                }
                best
            }
            Splitter::Random => {
                let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &i| (a.min(self.x[i][f]), b.max(self.x[i][f])));
                let mut threshold = self.rng.random_range(lo..hi);
                if threshold >= hi {
                    threshold = lo;
                }
                let mut left = (0.0, 0.0);
                let mut count = 0;
                for &i in idx {
                    if self.x[i][f] <= threshold {
                        left.0 += if self.y[i] == 1 { self.w[i] } else { 0.0 };
                        left.1 += self.w[i];
                        count += 1;
                    }
                }
                if count < leaf || n - count < leaf || left.1 <= 0.0 || total.1 - left.1 <= 0.0 {
                    return None;
                }
                Some(Candidate { feature: f, threshold, gain: self.score(left, total, parent) })
            }
        }
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let total = self.totals(&idx);
        let parent = self.params.criterion.impurity(total.0, total.1);
        let depth_hit = self.params.max_depth.is_some_and(|d| depth >= d);
        if depth_hit || idx.len() < self.params.min_samples_split || idx.len() < 2 * self.params.min_samples_leaf || parent <= PURE {
            return self.leaf(&idx);
        }
        let d = self.x[idx[0]].len();
        let want = self.params.max_features.count(d);
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(&mut self.rng);
        let mut best: Option<Candidate> = None;
        let mut visited = 0;
        for f in features {
            if visited >= want && best.is_some() {
                break;
            }
            let first = self.x[idx[0]][f];
            if idx.iter().all(|&i| self.x[i][f] == first) {
                continue;
            }
            visited += 1;
            if let Some(c) = self.best_on(f, &idx, total, parent) {
                if best.as_ref().is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        let Some(split) = best else {
            return self.leaf(&idx);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { p: 0.0, samples: 0 });
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[slot] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        slot
    }
}

impl DecisionTree {
    pub fn fit(params: TreeParams, x: &[Vec<f64>], y: &[u8], seed: u64) -> Self {
        let w = vec![1.0; x.len()];
        Self::fit_weighted(params, x, y, &w, seed)
    }

    pub fn fit_weighted(params: TreeParams, x: &[Vec<f64>], y: &[u8], w: &[f64], seed: u64) -> Self {
        let mut b = Builder { x, y, w, params, rng: ChaCha8Rng::seed_from_u64(seed), nodes: Vec::new() };
        b.build((0..x.len()).collect(), 0);
        Self { nodes: b.nodes }
    }

    pub fn leaf_index(&self, q: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split { feature, threshold, left, right } => at = if q[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Weighted positive fraction of the reached leaf.
    pub fn proba(&self, q: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(q)] {
            Node::Leaf { p, .. } => p,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn predict(&self, q: &[f64]) -> u8 {
        u8::from(self.proba(q) >= 0.5)
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &DecisionTree, at: usize) -> usize {
            match t.nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
            }
        }
        walk(self, 0)
    }
}
