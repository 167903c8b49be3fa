use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::{GaitError, Result};
use crate::dataset::{EventKind, Foot, GaitEvent, RunnerRecord, Structure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EventConfig {
    /// Centered moving-average width applied to the principal score, in frames.
    pub smoothing_window: usize,
    /// Turning points must be separated by this fraction of the 5-95 percentile range.
    pub hysteresis: f64,
    pub min_stance_s: f64,
    pub max_stance_s: f64,
    pub min_stances: usize,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self { smoothing_window: 11, hysteresis: 0.3, min_stance_s: 0.1, max_stance_s: 0.6, min_stances: 3 }
    }
}

/// Foot-segment angles projected onto their first principal component over
/// frames. `None` when the segment never moves.
pub fn principal_score(angles: &[[f64; 3]]) -> Option<Vec<f64>> {
    let n = angles.len() as f64;
    let mut mean = [0.0; 3];
    for a in angles {
        for k in 0..3 {
            mean[k] += a[k] / n;
        }
    }
    let mut cov = Matrix3::<f64>::zeros();
    for a in angles {
        let d = Vector3::new(a[0] - mean[0], a[1] - mean[1], a[2] - mean[2]);
        cov += d * d.transpose();
    }
    cov /= n;
    if cov.iter().all(|&v| v == 0.0) {
        return None;
    }
    let eig = SymmetricEigen::new(cov);
    let (top, _) = eig.eigenvalues.iter().enumerate().fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let mut axis = eig.eigenvectors.column(top).into_owned();
    // Fix the sign so the result does not depend on the solver's choice.
    let pivot = (0..3).fold(0, |best, k| if axis[k].abs() > axis[best].abs() { k } else { best });
    if axis[pivot] < 0.0 {
        axis = -axis;
    }
    Some(angles.iter().map(|a| (a[0] - mean[0]) * axis[0] + (a[1] - mean[1]) * axis[1] + (a[2] - mean[2]) * axis[2]).collect())
}

fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(x.len() - 1);
            x[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Alternating turning points `(frame, is_max)`: a candidate extremum is
/// confirmed once the signal retreats from it by more than `h`. The pending
/// candidate at the end is kept when at least `guard` frames follow it without
/// beating it.
fn turning_points(x: &[f64], h: f64, guard: usize) -> Vec<(usize, bool)> {
    let mut out = Vec::new();
    let (mut hi, mut lo) = (0usize, 0usize);
    // `None` until the first confirmed direction.
    let mut seeking_max: Option<bool> = None;
    for i in 1..x.len() {
        if x[i] > x[hi] {
            hi = i;
        }
        if x[i] < x[lo] {
            lo = i;
        }
        match seeking_max {
            None => {
                let fell = x[hi] - x[i] > h;
                let rose = x[i] - x[lo] > h;
                if fell || rose {
                    // Both can hold after a full swing; the earlier extremum comes first.
                    if fell && rose {
                        let first = (hi.min(lo), hi < lo);
                        out.push(first);
                    }
                    if fell && (!rose || lo < hi) {
                        out.push((hi, true));
                        lo = i;
                        seeking_max = Some(false);
                    } else {
                        out.push((lo, false));
                        hi = i;
                        seeking_max = Some(true);
                    }
                }
            }
            Some(true) => {
                if x[hi] - x[i] > h {
                    out.push((hi, true));
                    lo = i;
                    seeking_max = Some(false);
                }
            }
            Some(false) => {
                if x[i] - x[lo] > h {
                    out.push((lo, false));
                    hi = i;
                    seeking_max = Some(true);
                }
            }
        }
    }
    let last = x.len() - 1;
    match seeking_max {
        Some(true) if hi + guard <= last => out.push((hi, true)),
        Some(false) if lo + guard <= last => out.push((lo, false)),
        _ => {}
    }
    out
}

/// Stance intervals `(touch_down, toe_off)` taken as each maximum and the
/// minimum that follows it, ignoring turning points in the smoothing margin.
fn intervals(points: &[(usize, bool)], len: usize, margin: usize, flip: bool) -> Vec<(usize, usize)> {
    points
        .windows(2)
        .filter(|w| (w[0].1 != flip) && (w[1].1 == flip))
        .map(|w| (w[0].0, w[1].0))
        .filter(|&(a, b)| a >= margin && b + margin < len)
        .collect()
}

fn detect_foot(record: &RunnerRecord, foot: Foot, cfg: &EventConfig) -> Result<Vec<(usize, usize)>> {
    let structure = Structure::foot_segment(foot);
    let series = record.series(structure).ok_or_else(|| GaitError::MissingStructure {
        record_id: record.record_id.clone(),
        structure,
    })?;
    let degenerate = || GaitError::DegenerateSignal { record_id: record.record_id.clone(), foot };
    let score = principal_score(&series.angles).ok_or_else(degenerate)?;
    let window = cfg.smoothing_window.max(1) | 1;
    let smooth = moving_average(&score, window);
    let mut sorted = smooth.clone();
    sorted.sort_by(f64::total_cmp);
    let range = percentile(&sorted, 0.95) - percentile(&sorted, 0.05);
    if range <= 0.0 {
        return Err(degenerate());
    }
    let points = turning_points(&smooth, cfg.hysteresis * range, window);
    let rate = series.sample_rate;
    let in_range = |&(a, b): &(usize, usize)| {
        let d = (b - a) as f64 / rate;
        d >= cfg.min_stance_s && d <= cfg.max_stance_s
    };
    let margin = window / 2;
    // Either sign of the score may mark touch-down; keep the one whose
    // intervals look like stances, preferring the shorter on a tie.
    let candidates: Vec<(f64, f64, Vec<(usize, usize)>)> = [false, true]
        .into_iter()
        .map(|flip| {
            let all = intervals(&points, smooth.len(), margin, flip);
            let kept: Vec<_> = all.iter().copied().filter(in_range).collect();
            let frac = if all.is_empty() { 0.0 } else { kept.len() as f64 / all.len() as f64 };
            let mean = if kept.is_empty() {
                f64::INFINITY
            } else {
                kept.iter().map(|&(a, b)| (b - a) as f64).sum::<f64>() / kept.len() as f64
            };
            (frac, mean, kept)
        })
        .collect();
    let best = if candidates[0].0 > candidates[1].0
        || (candidates[0].0 == candidates[1].0 && candidates[0].1 <= candidates[1].1)
    {
        &candidates[0]
    } else {
        &candidates[1]
    };
    if best.2.len() < cfg.min_stances {
        return Err(GaitError::NoEventsFound { record_id: record.record_id.clone(), foot, found: best.2.len() });
    }
    Ok(best.2.clone())
}

/// Touch-down/toe-off events for both feet with the default configuration.
pub fn detect_events(record: &RunnerRecord) -> Result<Vec<GaitEvent>> {
    detect_events_with(record, &EventConfig::default())
}

/// Ground-truth events on the record are returned unchanged. Otherwise each
/// foot's segment angles are reduced to their principal score, smoothed, and
/// touch-down/toe-off are placed at the score maximum and the following minimum.
pub fn detect_events_with(record: &RunnerRecord, cfg: &EventConfig) -> Result<Vec<GaitEvent>> {
    if let Some(ev) = &record.events {
        return Ok(ev.clone());
    }
    let mut events = Vec::new();
    for foot in Foot::BOTH {
        for (td, to) in detect_foot(record, foot, cfg)? {
            events.push(GaitEvent { kind: EventKind::TouchDown, foot, frame_index: td });
            events.push(GaitEvent { kind: EventKind::ToeOff, foot, frame_index: to });
        }
    }
    events.sort_by_key(|e| (e.frame_index, e.foot, e.kind));
    Ok(events)
}
