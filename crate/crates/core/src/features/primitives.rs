use super::{FeatureError, Result};

fn check(series: &[f64]) -> Result<()> {
    if series.len() < 3 {
        return Err(FeatureError::TooShort { len: series.len(), need: 3 });
    }
    Ok(())
}

/// Which extremum a peak feature reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakDirection {
    /// Signed value of largest magnitude.
    Magnitude,
    Positive,
    Negative,
}

/// Signed extremum of largest magnitude; ties keep the first sample.
pub fn peak(series: &[f64]) -> Result<f64> {
    peak_in(series, PeakDirection::Magnitude)
}

pub fn peak_in(series: &[f64], dir: PeakDirection) -> Result<f64> {
    check(series)?;
    let first = series[0];
    Ok(match dir {
        PeakDirection::Positive => series.iter().copied().fold(first, f64::max),
        PeakDirection::Negative => series.iter().copied().fold(first, f64::min),
        PeakDirection::Magnitude => series.iter().copied().fold(first, |best, v| if v.abs() > best.abs() { v } else { best }),
    })
}

pub fn excursion(series: &[f64]) -> Result<f64> {
    check(series)?;
    Ok(range(series))
}

pub(crate) fn range(series: &[f64]) -> f64 {
    let hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// Largest absolute central difference over the interior samples, per second.
pub fn peak_velocity(series: &[f64], dt: f64) -> Result<f64> {
    check(series)?;
    if !(dt > 0.0) {
        return Err(FeatureError::BadTimeStep(dt));
    }
    Ok(series.windows(3).map(|w| ((w[2] - w[0]) / (2.0 * dt)).abs()).fold(0.0, f64::max))
}

/// Percentage of samples satisfying `pred`.
pub fn pct_time(series: &[f64], pred: impl Fn(f64) -> bool) -> Result<f64> {
    check(series)?;
    Ok(100.0 * series.iter().filter(|&&v| pred(v)).count() as f64 / series.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_definitions() {
        assert_eq!(peak(&[0.0, 5.0, 3.0]).unwrap(), 5.0);
        assert_eq!(peak(&[1.0, -6.0, 3.0]).unwrap(), -6.0);
        assert_eq!(excursion(&[0.0, 5.0, 3.0]).unwrap(), 5.0);
        assert_eq!(excursion(&[2.0; 4]).unwrap(), 0.0);
        assert_eq!(peak_velocity(&[2.0; 4], 0.01).unwrap(), 0.0);
        assert_eq!(pct_time(&[-1.0, 1.0, 2.0, 0.0], |v| v > 0.0).unwrap(), 50.0);
        assert!(matches!(peak(&[1.0, 2.0]), Err(FeatureError::TooShort { .. })));
    }
}
