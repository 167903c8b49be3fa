use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{FeatureError, Result};

/// Band powers in deg^2 of a mean-removed angle series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPower {
    /// `[0, 1)` Hz.
    pub lf: f64,
    /// `[1, 3)` Hz.
    pub mf: f64,
    /// `[3, min(99, Nyquist)]` Hz.
    pub hf: f64,
    /// Power over `[0, Nyquist]`; equals the mean square of the centered series.
    pub total: f64,
}

pub const HF_CEILING_HZ: f64 = 99.0;

/// One-sided periodogram bins `(frequency, power)` normalised so the powers
/// sum to the mean square of the centered series.
pub fn periodogram(series: &[f64], sample_rate: f64) -> Vec<(f64, f64)> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let norm = (n as f64) * (n as f64);
    (0..=n / 2)
        .map(|k| {
            // Bins other than DC and an even-length Nyquist bin fold in their mirror.
            let fold = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
            (k as f64 * sample_rate / n as f64, fold * buf[k].norm_sqr() / norm)
        })
        .collect()
}

pub fn band_power(series: &[f64], sample_rate: f64) -> Result<BandPower> {
    if !(sample_rate > 6.0) {
        return Err(FeatureError::RateTooLow(sample_rate));
    }
    let need = (2.0 * sample_rate).ceil() as usize;
    if series.len() < need {
        return Err(FeatureError::TooShort { len: series.len(), need });
    }
    // Past the ceiling only when Nyquist is; avoids dropping a Nyquist bin whose frequency rounds up.
    let hf_top = if sample_rate / 2.0 <= HF_CEILING_HZ { f64::INFINITY } else { HF_CEILING_HZ };
    let mut out = BandPower { lf: 0.0, mf: 0.0, hf: 0.0, total: 0.0 };
    for (f, p) in periodogram(series, sample_rate) {
        out.total += p;
        if f < 1.0 {
            out.lf += p;
        } else if f < 3.0 {
            out.mf += p;
        } else if f <= hf_top {
            out.hf += p;
        }
    }
    Ok(out)
}
