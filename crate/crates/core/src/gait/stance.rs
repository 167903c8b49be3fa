use serde::{Deserialize, Serialize};

use super::spline::natural_cubic_resample;
use super::{GaitError, Result};
use crate::dataset::{EventKind, Foot, GaitEvent, RunnerRecord, Structure};

/// Time steps of a normalised stance.
pub const STANCE_SAMPLES: usize = 101;
/// Three Cardan angles times {mean, upper envelope, lower envelope}.
pub const CHANNELS: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StancePhase {
    pub foot: Foot,
    pub start_frame: usize,
    pub end_frame: usize,
    /// Stance-side ankle, knee, hip, foot, then pelvis.
    pub structures: [Structure; 5],
    /// `[t][structure]` angle triples, `STANCE_SAMPLES` rows.
    pub resampled: Vec<[[f64; 3]; 5]>,
    /// Seconds from touch-down to toe-off.
    pub duration: f64,
}

/// Cuts every touch-down/toe-off pair into a stance phase and resamples each
/// stance-side structure to [`STANCE_SAMPLES`] points with a natural cubic spline.
pub fn segment_stances(record: &RunnerRecord, events: &[GaitEvent]) -> Result<Vec<StancePhase>> {
    let rate = record.sample_rate();
    let mut phases = Vec::new();
    for foot in Foot::BOTH {
        let structures = Structure::stance_set(foot);
        let series = structures
            .iter()
            .map(|&s| {
                record.series(s).ok_or_else(|| GaitError::MissingStructure { record_id: record.record_id.clone(), structure: s })
            })
            .collect::<Result<Vec<_>>>()?;
        let foot_events: Vec<&GaitEvent> = events.iter().filter(|e| e.foot == foot).collect();
        let pairs: Vec<(usize, usize)> = foot_events
            .windows(2)
            .filter(|w| w[0].kind == EventKind::TouchDown && w[1].kind == EventKind::ToeOff)
            .map(|w| (w[0].frame_index, w[1].frame_index))
            .collect();
        if pairs.is_empty() {
            return Err(GaitError::InsufficientEvents(format!("record {}: no stance for foot {foot}", record.record_id)));
        }
        for (start, end) in pairs {
            if end < start + 4 || end >= record.len() {
                return Err(GaitError::TooShort { foot, start, end });
            }
            let mut resampled = vec![[[0.0; 3]; 5]; STANCE_SAMPLES];
            for (si, s) in series.iter().enumerate() {
                for axis in 0..3 {
                    let raw: Vec<f64> = s.angles[start..=end].iter().map(|a| a[axis]).collect();
                    for (t, v) in natural_cubic_resample(&raw, STANCE_SAMPLES).into_iter().enumerate() {
                        resampled[t][si][axis] = v;
                    }
                }
            }
            phases.push(StancePhase {
                foot,
                start_frame: start,
                end_frame: end,
                structures,
                resampled,
                duration: (end - start) as f64 / rate,
            });
        }
    }
    Ok(phases)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FootSelection {
    L,
    R,
    Both,
}

/// `(T, A, C)` block: per time step and structure slot, each Cardan axis as
/// mean, upper and lower envelope over the record's stances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceTensor {
    pub record_id: String,
    /// Row-major `[t][a][c]`.
    pub data: Vec<f64>,
    pub structure_labels: Vec<String>,
    pub channel_map: Vec<String>,
}

impl StanceTensor {
    pub fn structures(&self) -> usize {
        self.structure_labels.len()
    }

    pub fn get(&self, t: usize, a: usize, c: usize) -> f64 {
        self.data[(t * self.structures() + a) * CHANNELS + c]
    }

    pub fn channel_labels() -> Vec<String> {
        let mut out = Vec::with_capacity(CHANNELS);
        for axis in ["x", "y", "z"] {
            for modality in ["mean", "upper", "lower"] {
                out.push(format!("{axis}_{modality}"));
            }
        }
        out
    }

    /// `structure:channel` label of every `(a, c)` row, in data order.
    pub fn row_labels(&self) -> Vec<String> {
        let channels = Self::channel_labels();
        self.structure_labels.iter().flat_map(|s| channels.iter().map(move |c| format!("{s}:{c}"))).collect()
    }
}

/// Slots per foot selection: the left stance set, the right one, or both with
/// the right-stance pelvis kept as `pelvis_dup` when `pelvis_dup` is set.
fn slots(foot: FootSelection, pelvis_dup: bool) -> Vec<(Foot, usize, String)> {
    let side = |f: Foot, count: usize, rename_pelvis: bool| {
        Structure::stance_set(f)
            .into_iter()
            .take(count)
            .enumerate()
            .map(move |(i, s)| {
                let name = if rename_pelvis && s == Structure::Pelvis { "pelvis_dup".to_string() } else { s.name().to_string() };
                (f, i, name)
            })
            .collect::<Vec<_>>()
    };
    match foot {
        FootSelection::L => side(Foot::L, 5, false),
        FootSelection::R => side(Foot::R, 5, false),
        FootSelection::Both => {
            let mut v = side(Foot::L, 5, false);
            v.extend(side(Foot::R, if pelvis_dup { 5 } else { 4 }, true));
            v
        }
    }
}

pub fn build_stance_tensor(
    phases: &[StancePhase],
    foot: FootSelection,
    pelvis_dup: bool,
    record_id: &str,
) -> Result<StanceTensor> {
    let slots = slots(foot, pelvis_dup);
    for f in Foot::BOTH {
        let wanted = slots.iter().any(|s| s.0 == f);
        if wanted && !phases.iter().any(|p| p.foot == f) {
            return Err(GaitError::NoPhases(foot));
        }
    }
    let a_count = slots.len();
    let mut data = vec![0.0; STANCE_SAMPLES * a_count * CHANNELS];
    for (a, (f, idx, _)) in slots.iter().enumerate() {
        let side: Vec<&StancePhase> = phases.iter().filter(|p| p.foot == *f).collect();
        let n = side.len() as f64;
        for t in 0..STANCE_SAMPLES {
            for axis in 0..3 {
                let (mut sum, mut hi, mut lo) = (0.0, f64::NEG_INFINITY, f64::INFINITY);
                for p in &side {
                    let v = p.resampled[t][*idx][axis];
                    sum += v;
                    hi = hi.max(v);
                    lo = lo.min(v);
                }
                // Rounding in the sum must not push the mean outside the envelope.
                let mean = (sum / n).clamp(lo, hi);
                let base = (t * a_count + a) * CHANNELS + axis * 3;
                data[base] = mean;
                data[base + 1] = hi;
                data[base + 2] = lo;
            }
        }
    }
    Ok(StanceTensor {
        record_id: record_id.to_string(),
        data,
        structure_labels: slots.into_iter().map(|s| s.2).collect(),
        channel_map: StanceTensor::channel_labels(),
    })
}
