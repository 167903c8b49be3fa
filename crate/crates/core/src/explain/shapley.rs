use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ExplainError, Result};

pub const MAX_EXACT_PLAYERS: usize = 12;
pub const MIN_PERMUTATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ShapleyMode {
    Exact,
    MonteCarlo { permutations: usize, seed: u64 },
}

/// Players are groups of input columns; `None` makes every column a player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyConfig {
    pub mode: ShapleyMode,
    pub baseline: Vec<f64>,
    pub groups: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyResult {
    pub phi: Vec<f64>,
    /// Standard error of each Monte-Carlo estimate.
    pub std_error: Option<Vec<f64>>,
    pub f_x: f64,
    pub f_baseline: f64,
    /// `|sum(phi) - (f(x) - f(baseline))|`
    pub efficiency_residual: f64,
}

/// Column means of the training rows.
pub fn mean_baseline(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows.first().map_or(0, Vec::len);
    let mut m = vec![0.0; d];
    for r in rows {
        for (a, v) in m.iter_mut().zip(r) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|v| *v /= rows.len().max(1) as f64);
    m
}

/// Structure x time-bin superpixels over a flattened `[t][a][c]` row
/// (optionally followed by `extra` point columns, one player each).
pub fn superpixels(time_steps: usize, structures: usize, channels: usize, bin: usize, extra: usize) -> Vec<Vec<usize>> {
    let bins = time_steps.div_ceil(bin.max(1));
    let mut groups = Vec::with_capacity(structures * bins + extra);
    for a in 0..structures {
        for b in 0..bins {
            let mut g = Vec::new();
            for t in b * bin..((b + 1) * bin).min(time_steps) {
                for c in 0..channels {
                    g.push((t * structures + a) * channels + c);
                }
            }
            groups.push(g);
        }
    }
    let base = time_steps * structures * channels;
    groups.extend((0..extra).map(|j| vec![base + j]));
    groups
}

fn compose(x: &[f64], baseline: &[f64], groups: &[Vec<usize>], present: impl Fn(usize) -> bool) -> Vec<f64> {
    let mut row = baseline.to_vec();
    for (p, g) in groups.iter().enumerate() {
        if present(p) {
            for &j in g {
                row[j] = x[j];
            }
        }
    }
    row
}

fn binom_weights(n: usize) -> Vec<f64> {
    // |S|! (n - |S| - 1)! / n!
    let fact = |k: usize| (1..=k).fold(1.0, |a, v| a * v as f64);
    (0..n).map(|s| fact(s) * fact(n - s - 1) / fact(n)).collect()
}

pub fn shapley(f: &dyn Fn(&[Vec<f64>]) -> Vec<f64>, x: &[f64], cfg: &ShapleyConfig) -> Result<ShapleyResult> {
    if cfg.baseline.len() != x.len() {
        return Err(ExplainError::Dimension(format!("baseline width {} != input width {}", cfg.baseline.len(), x.len())));
    }
    let groups: Vec<Vec<usize>> = cfg.groups.clone().unwrap_or_else(|| (0..x.len()).map(|j| vec![j]).collect());
    if let Some(j) = groups.iter().flatten().find(|&&j| j >= x.len()) {
        return Err(ExplainError::Dimension(format!("group column {j} out of range")));
    }
    let n = groups.len();
    let ends = f(&[x.to_vec(), cfg.baseline.clone()]);
    let (f_x, f_baseline) = (ends[0], ends[1]);
    let (phi, std_error) = match cfg.mode {
        ShapleyMode::Exact => {
            if n > MAX_EXACT_PLAYERS {
                return Err(ExplainError::TooManyFeaturesForExact(n));
            }
            let rows: Vec<Vec<f64>> = (0..1usize << n).map(|mask| compose(x, &cfg.baseline, &groups, |p| mask >> p & 1 == 1)).collect();
            let v = f(&rows);
            let w = binom_weights(n);
            let mut phi = vec![0.0; n];
            for (i, p) in phi.iter_mut().enumerate() {
                for mask in 0..1usize << n {
                    if mask >> i & 1 == 0 {
                        let s = mask.count_ones() as usize;
                        *p += w[s] * (v[mask | 1 << i] - v[mask]);
                    }
                }
            }
            (phi, None)
        }
        ShapleyMode::MonteCarlo { permutations, seed } => {
            if permutations < MIN_PERMUTATIONS {
                return Err(ExplainError::TooFewPermutations(permutations));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sum = vec![0.0; n];
            let mut sum_sq = vec![0.0; n];
            let mut order: Vec<usize> = (0..n).collect();
            for _ in 0..permutations {
                order.shuffle(&mut rng);
                let mut present = vec![false; n];
                let mut rows = Vec::with_capacity(n + 1);
                rows.push(cfg.baseline.clone());
                for &p in &order {
                    present[p] = true;
                    rows.push(compose(x, &cfg.baseline, &groups, |q| present[q]));
                }
                let v = f(&rows);
                for (k, &p) in order.iter().enumerate() {
                    let d = v[k + 1] - v[k];
                    sum[p] += d;
                    sum_sq[p] += d * d;
                }
            }
            let m = permutations as f64;
            let phi: Vec<f64> = sum.iter().map(|s| s / m).collect();
            let se = sum_sq
                .iter()
                .zip(&phi)
                .map(|(sq, mean)| ((sq / m - mean * mean).max(0.0) * m / (m - 1.0) / m).sqrt())
                .collect();
            (phi, Some(se))
        }
    };
    let residual = (phi.iter().sum::<f64>() - (f_x - f_baseline)).abs();
    Ok(ShapleyResult { phi, std_error, f_x, f_baseline, efficiency_residual: residual })
}
