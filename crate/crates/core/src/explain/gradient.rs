use gaitrisk_deepnet::{ForwardCtx, Graph, Network, Tensor, TrainSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{time_columns, ExplainError, ExplanationMap, MapMethod, Result};
use crate::seed::derive_seed;

pub const GRADCAM_DEFAULT_LAYER: &str = "block2";
pub const MAP_STEPS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothGradConfig {
    pub samples: usize,
    /// Noise std as a fraction of each case's input range.
    pub sigma_fraction: f64,
    pub seed: u64,
}

impl Default for SmoothGradConfig {
    fn default() -> Self {
        Self { samples: 25, sigma_fraction: 0.05, seed: 0 }
    }
}

fn positives(data: &TrainSet) -> Result<Vec<usize>> {
    let idx: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == 1).collect();
    if idx.is_empty() { Err(ExplainError::NoPositiveCases) } else { Ok(idx) }
}

fn repeat_points(data: &TrainSet, i: usize, n: usize) -> Result<Option<Tensor>> {
    match &data.points {
        Some(p) => {
            let row = &p[i];
            Ok(Some(Tensor::new(vec![n, row.len()], row.iter().copied().cycle().take(n * row.len()).collect())?))
        }
        None => Ok(None),
    }
}

/// SmoothGrad: mean `|d prob / d input|` over noisy copies, averaged over the
/// positive cases. Rows are structure-channel slots, columns time steps.
pub fn saliency(net: &dyn Network, data: &TrainSet, row_labels: &[String], cfg: &SmoothGradConfig) -> Result<ExplanationMap> {
    let cases = positives(data)?;
    let (t, a, c) = net.input_dims();
    if row_labels.len() != a * c {
        return Err(ExplainError::Dimension(format!("{} row labels for {} slots", row_labels.len(), a * c)));
    }
    let n = cfg.samples.max(1);
    let mut acc = vec![0.0; t * a * c];
    for &i in &cases {
        let x = data.stances[i].data();
        let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let sigma = cfg.sigma_fraction * (hi - lo);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "smoothgrad", i as u64));
        let mut batch = Vec::with_capacity(n * x.len());
        for _ in 0..n {
            if sigma > 0.0 {
                let noise = Normal::new(0.0, sigma).expect("positive sigma");
                batch.extend(x.iter().map(|v| v + noise.sample(&mut rng)));
            } else {
                batch.extend_from_slice(x);
            }
        }
        let mut g = Graph::new();
        let sv = g.input(Tensor::new(vec![n, t, a, c], batch)?);
        let pv = repeat_points(data, i, n)?.map(|p| g.input(p));
        let out = net.forward_vars(&mut g, sv, pv, &mut ForwardCtx::eval())?;
        let grads = g.backward(out.prob)?;
        let gs = grads.get_or_zero(&g, sv);
        for (k, v) in gs.data().iter().enumerate() {
            acc[k % (t * a * c)] += v.abs() / n as f64;
        }
    }
    let m = cases.len() as f64;
    let values = (0..a * c)
        .map(|slot| (0..t).map(|step| acc[step * a * c + slot] / m).collect())
        .collect();
    Ok(ExplanationMap {
        method: MapMethod::Saliency,
        row_labels: row_labels.to_vec(),
        column_labels: time_columns(t),
        values,
        aggregation: "mean over positive cases".into(),
        baseline: format!("smoothgrad n={n} sigma={}*range", cfg.sigma_fraction),
        cases: cases.len(),
    })
}

/// Linear resampling of `v` onto `steps` evenly spaced points.
pub fn upsample_linear(v: &[f64], steps: usize) -> Vec<f64> {
    if v.len() == 1 || steps == 1 {
        return vec![v[0]; steps];
    }
    let last = (v.len() - 1) as f64;
    (0..steps)
        .map(|i| {
            let pos = last * i as f64 / (steps - 1) as f64;
            let lo = (pos.floor() as usize).min(v.len() - 2);
            let frac = pos - lo as f64;
            v[lo] * (1.0 - frac) + v[lo + 1] * frac
        })
        .collect()
}

/// Grad-CAM over the `[B, L, K]` activation tapped as `layer`, upsampled to 101 steps.
pub fn gradcam(net: &dyn Network, data: &TrainSet, layer: &str) -> Result<ExplanationMap> {
    let cases = positives(data)?;
    let (t, a, c) = net.input_dims();
    let mut acc = vec![0.0; MAP_STEPS];
    for &i in &cases {
        let mut g = Graph::new();
        let sv = g.input(Tensor::new(vec![1, t, a, c], data.stances[i].data().to_vec())?);
        let pv = repeat_points(data, i, 1)?.map(|p| g.input(p));
        let out = net.forward_vars(&mut g, sv, pv, &mut ForwardCtx::eval())?;
        let tap = out.tap(layer).ok_or_else(|| ExplainError::LayerNotFound(layer.into()))?;
        let shape = g.shape(tap).to_vec();
        if shape.len() != 3 {
            return Err(ExplainError::LayerNotFound(format!("{layer} is not a [B, L, K] conv map: {shape:?}")));
        }
        let (l, k) = (shape[1], shape[2]);
        let grads = g.backward(out.prob)?;
        let ga = grads.get_or_zero(&g, tap);
        let act = g.value(tap).data();
        let weights: Vec<f64> = (0..k).map(|ch| (0..l).map(|s| ga.data()[s * k + ch]).sum::<f64>() / l as f64).collect();
        let cam: Vec<f64> = (0..l)
            .map(|s| (0..k).map(|ch| weights[ch] * act[s * k + ch]).sum::<f64>().max(0.0))
            .collect();
        for (dst, v) in acc.iter_mut().zip(upsample_linear(&cam, MAP_STEPS)) {
            *dst += v;
        }
    }
    let m = cases.len() as f64;
    Ok(ExplanationMap {
        method: MapMethod::Gradcam,
        row_labels: vec![format!("gradcam:{layer}")],
        column_labels: time_columns(MAP_STEPS),
        values: vec![acc.into_iter().map(|v| v / m).collect()],
        aggregation: "mean over positive cases".into(),
        baseline: "none".into(),
        cases: cases.len(),
    })
}
