use serde::{Deserialize, Serialize};

use super::{FeatureError, Result};

/// Column z-scoring fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub std: Vec<f64>,
    /// Columns whose std fell below `MIN_STD`; applied unscaled.
    pub passthrough: Vec<bool>,
}

pub const MIN_STD: f64 = 1e-12;

impl ScalerParams {
    pub fn fit(train: &[Vec<f64>]) -> Result<Self> {
        let first = train.first().ok_or(FeatureError::EmptyMatrix)?;
        let d = first.len();
        let n = train.len() as f64;
        let mut mean = vec![0.0; d];
        for row in train {
            if row.len() != d {
                return Err(FeatureError::SchemaMismatch(format!("row width {} vs {d}", row.len())));
            }
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in train {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = var.into_iter().map(|s| (s / n).sqrt()).collect();
        let passthrough = std.iter().map(|&s| !(s >= MIN_STD)).collect();
        Ok(Self { mean, std, passthrough })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.width() {
            return Err(FeatureError::SchemaMismatch(format!("row width {} vs scaler width {}", row.len(), self.width())));
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, &v)| if self.passthrough[j] { v } else { (v - self.mean[j]) / self.std[j] })
            .collect())
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.apply_row(r)).collect()
    }
}

/// Fits on `train` and transforms `apply` with the same parameters.
pub fn standardize(train: &[Vec<f64>], apply: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, ScalerParams)> {
    let params = ScalerParams::fit(train)?;
    Ok((params.apply(apply)?, params))
}
