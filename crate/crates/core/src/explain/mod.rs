//! Attribution maps: exact and sampled Shapley values, partial dependence,
//! SmoothGrad saliency and Grad-CAM.

pub mod gradient;
pub mod pdp;
mod render;
pub mod shapley;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gradient::{gradcam, saliency, upsample_linear, SmoothGradConfig, GRADCAM_DEFAULT_LAYER};
pub use pdp::{pdp, quantile_grid, PdpCurve};
pub use shapley::{mean_baseline, shapley, superpixels, ShapleyConfig, ShapleyMode, ShapleyResult};

use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("exact Shapley supports at most 12 players, got {0}")]
    TooManyFeaturesForExact(usize),
    #[error("Monte-Carlo Shapley needs at least 100 permutations, got {0}")]
    TooFewPermutations(usize),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("partial dependence grid needs at least 2 values, got {0}")]
    GridTooSmall(usize),
    #[error("no positive cases to explain")]
    NoPositiveCases,
    #[error("layer not found: {0}")]
    LayerNotFound(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error(transparent)]
    Net(#[from] gaitrisk_deepnet::NetError),
}

pub type Result<T> = std::result::Result<T, ExplainError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapMethod {
    Shapley,
    Pdp,
    Saliency,
    Gradcam,
}

impl MapMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::Shapley => "shapley",
            Self::Pdp => "pdp",
            Self::Saliency => "saliency",
            Self::Gradcam => "gradcam",
        }
    }

    /// Signed attributions get a diverging colour scale.
    pub fn diverging(self) -> bool {
        matches!(self, Self::Shapley)
    }
}

/// Row-major `values[row][column]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationMap {
    pub method: MapMethod,
    pub row_labels: Vec<String>,
    pub column_labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub aggregation: String,
    pub baseline: String,
    pub cases: usize,
}

pub fn time_columns(steps: usize) -> Vec<String> {
    (0..steps).map(|t| format!("t{t}")).collect()
}

impl ExplanationMap {
    pub fn shape(&self) -> (usize, usize) {
        (self.row_labels.len(), self.column_labels.len())
    }

    pub fn to_csv(&self) -> String {
        render::csv(self)
    }

    pub fn to_svg(&self) -> String {
        render::svg(self)
    }
}

/// Sampled Shapley values of structure x time-bin superpixels, spread evenly
/// over their cells and averaged over `cases` (flattened `[t][a][c]` rows).
#[allow(clippy::too_many_arguments)]
pub fn shapley_time_map(
    f: &dyn Fn(&[Vec<f64>]) -> Vec<f64>,
    cases: &[Vec<f64>],
    baseline: &[f64],
    dims: (usize, usize, usize),
    bin: usize,
    permutations: usize,
    seed: u64,
    row_labels: &[String],
) -> Result<ExplanationMap> {
    let (t, a, c) = dims;
    if cases.is_empty() {
        return Err(ExplainError::NoPositiveCases);
    }
    if row_labels.len() != a * c {
        return Err(ExplainError::Dimension(format!("{} row labels for {} slots", row_labels.len(), a * c)));
    }
    let extra = baseline.len().checked_sub(t * a * c).ok_or_else(|| ExplainError::Dimension("baseline shorter than the tensor".into()))?;
    let groups = superpixels(t, a, c, bin, extra);
    let mut values = vec![vec![0.0; t]; a * c];
    for (i, x) in cases.iter().enumerate() {
        let cfg = ShapleyConfig {
            mode: ShapleyMode::MonteCarlo { permutations, seed: derive_seed(seed, "shapley/case", i as u64) },
            baseline: baseline.to_vec(),
            groups: Some(groups.clone()),
        };
        let r = shapley(f, x, &cfg)?;
        for (g, phi) in groups.iter().zip(&r.phi) {
            let share = phi / g.len() as f64 / cases.len() as f64;
            for &j in g {
                if j < t * a * c {
                    let (step, slot) = (j / (a * c), j % (a * c));
                    values[slot][step] += share;
                }
            }
        }
    }
    Ok(ExplanationMap {
        method: MapMethod::Shapley,
        row_labels: row_labels.to_vec(),
        column_labels: time_columns(t),
        values,
        aggregation: "mean over positive cases".into(),
        baseline: "training-set mean".into(),
        cases: cases.len(),
    })
}

/// Per-feature Shapley values averaged over `cases`, sorted by decreasing magnitude.
pub fn shapley_ranking(
    f: &dyn Fn(&[Vec<f64>]) -> Vec<f64>,
    cases: &[Vec<f64>],
    baseline: &[f64],
    names: &[String],
    permutations: usize,
    seed: u64,
) -> Result<ExplanationMap> {
    if cases.is_empty() {
        return Err(ExplainError::NoPositiveCases);
    }
    if names.len() != baseline.len() {
        return Err(ExplainError::Dimension(format!("{} names for {} features", names.len(), baseline.len())));
    }
    let mut mean = vec![0.0; names.len()];
    for (i, x) in cases.iter().enumerate() {
        let mode = if names.len() <= shapley::MAX_EXACT_PLAYERS {
            ShapleyMode::Exact
        } else {
            ShapleyMode::MonteCarlo { permutations, seed: derive_seed(seed, "shapley/case", i as u64) }
        };
        let r = shapley(f, x, &ShapleyConfig { mode, baseline: baseline.to_vec(), groups: None })?;
        for (m, p) in mean.iter_mut().zip(&r.phi) {
            *m += p / cases.len() as f64;
        }
    }
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&x, &y| mean[y].abs().total_cmp(&mean[x].abs()).then_with(|| names[x].cmp(&names[y])));
    Ok(ExplanationMap {
        method: MapMethod::Shapley,
        row_labels: order.iter().map(|&j| names[j].clone()).collect(),
        column_labels: vec!["phi".into()],
        values: order.iter().map(|&j| vec![mean[j]]).collect(),
        aggregation: "mean over positive cases".into(),
        baseline: "training-set mean".into(),
        cases: cases.len(),
    })
}

impl PdpCurve {
    pub fn to_map(&self) -> ExplanationMap {
        ExplanationMap {
            method: MapMethod::Pdp,
            row_labels: vec!["value".into(), "mean_prediction".into()],
            column_labels: (0..self.values.len()).map(|i| format!("q{i}")).collect(),
            values: vec![self.values.clone(), self.mean_prediction.clone()],
            aggregation: "mean over dataset".into(),
            baseline: format!("feature {}", self.feature),
            cases: 0,
        }
    }
}
