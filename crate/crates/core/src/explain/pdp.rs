use serde::{Deserialize, Serialize};

use super::{ExplainError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpCurve {
    pub feature: String,
    pub values: Vec<f64>,
    pub mean_prediction: Vec<f64>,
}

/// Linear-interpolated quantiles of `column` at `n` evenly spaced levels in [0, 1].
pub fn quantile_grid(column: &[f64], n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(ExplainError::GridTooSmall(n));
    }
    if column.is_empty() {
        return Err(ExplainError::Dimension("empty column".into()));
    }
    let mut s = column.to_vec();
    s.sort_by(f64::total_cmp);
    let last = (s.len() - 1) as f64;
    Ok((0..n)
        .map(|i| {
            let pos = last * i as f64 / (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
        })
        .collect())
}

/// Mean prediction over `rows` with column `feature` forced to each grid value.
pub fn pdp(
    f: &dyn Fn(&[Vec<f64>]) -> Vec<f64>,
    rows: &[Vec<f64>],
    names: &[String],
    feature: &str,
    grid: &[f64],
) -> Result<PdpCurve> {
    let j = names.iter().position(|n| n == feature).ok_or_else(|| ExplainError::UnknownFeature(feature.into()))?;
    if grid.len() < 2 {
        return Err(ExplainError::GridTooSmall(grid.len()));
    }
    if rows.is_empty() {
        return Err(ExplainError::Dimension("no rows to average over".into()));
    }
    let mean_prediction = grid
        .iter()
        .map(|&v| {
            let forced: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    r[j] = v;
                    r
                })
                .collect();
            f(&forced).iter().sum::<f64>() / rows.len() as f64
        })
        .collect();
    Ok(PdpCurve { feature: feature.into(), values: grid.to_vec(), mean_prediction })
}
