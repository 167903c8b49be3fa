use serde::{Deserialize, Serialize};

use super::{GaitError, Result};
use crate::dataset::{EventKind, Foot, GaitEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatioTemporalSummary {
    /// Strides per minute.
    pub stride_rate: f64,
    /// Meters; only with a known belt speed.
    pub stride_length: Option<f64>,
    pub stance_pct: f64,
    pub swing_pct: f64,
    /// Meters; needs mediolateral foot positions, which angle data lacks.
    pub step_width: Option<f64>,
    /// Seconds per stance, both feet in event order.
    pub contact_times: Vec<f64>,
    pub stride_time: f64,
}

/// Stride times pool consecutive same-foot touch-downs of both feet.
pub fn spatiotemporal(events: &[GaitEvent], sample_rate: f64, treadmill_speed: Option<f64>) -> Result<SpatioTemporalSummary> {
    let mut strides = Vec::new();
    let mut stances = Vec::new();
    for foot in Foot::BOTH {
        let own: Vec<&GaitEvent> = events.iter().filter(|e| e.foot == foot).collect();
        let tds: Vec<usize> = own.iter().filter(|e| e.kind == EventKind::TouchDown).map(|e| e.frame_index).collect();
        strides.extend(tds.windows(2).map(|w| (w[1] - w[0]) as f64 / sample_rate));
        stances.extend(
            own.windows(2)
                .filter(|w| w[0].kind == EventKind::TouchDown && w[1].kind == EventKind::ToeOff)
                .map(|w| (w[0].frame_index, (w[1].frame_index - w[0].frame_index) as f64 / sample_rate)),
        );
    }
    if strides.is_empty() {
        return Err(GaitError::InsufficientEvents("need two touch-downs on one foot".into()));
    }
    if stances.is_empty() {
        return Err(GaitError::InsufficientEvents("no touch-down followed by toe-off".into()));
    }
    stances.sort_by_key(|s| s.0);
    let contact_times: Vec<f64> = stances.into_iter().map(|s| s.1).collect();
    let stride_time = strides.iter().sum::<f64>() / strides.len() as f64;
    let stance_time = contact_times.iter().sum::<f64>() / contact_times.len() as f64;
    let stance_pct = stance_time / stride_time * 100.0;
    Ok(SpatioTemporalSummary {
        stride_rate: 60.0 / stride_time,
        stride_length: treadmill_speed.map(|v| v * stride_time),
        stance_pct,
        swing_pct: 100.0 - stance_pct,
        step_width: None,
        contact_times,
        stride_time,
    })
}
