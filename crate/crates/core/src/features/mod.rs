//! Point-value features: spatio-temporal parameters, stance angle peaks and
//! excursions, peak angular velocities, %-time conditions, band powers and
//! demographics, plus train-only standardization.

mod primitives;
mod scale;
mod spectrum;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DominantLeg, Label, RunnerRecord, Sex, Structure};
use crate::gait::{GaitError, SpatioTemporalSummary, StancePhase};
use crate::seed::sha256_hex;

pub use primitives::{excursion, peak, peak_in, peak_velocity, pct_time, PeakDirection};
pub use scale::{standardize, ScalerParams, MIN_STD};
pub use spectrum::{band_power, periodogram, BandPower, HF_CEILING_HZ};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("series of {len} samples is too short, need {need}")]
    TooShort { len: usize, need: usize },
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("sample rate {0} Hz is too low for band powers (need > 6 Hz)")]
    RateTooLow(f64),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("no stance phases to extract features from")]
    EmptyPhases,
    #[error("empty feature matrix")]
    EmptyMatrix,
    #[error(transparent)]
    Gait(#[from] GaitError),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFamily {
    Spatiotemporal,
    Peak,
    Excursion,
    VelocityPeak,
    PctTime,
    BandPower,
    Demographic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub unit: String,
    pub family: FeatureFamily,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// 16 hex digits of a sha256 over the ordered `(name, unit, family)` list.
    pub fn hash(&self) -> String {
        let mut text = String::new();
        for f in &self.features {
            text.push_str(&format!("{}|{}|{:?}\n", f.name, f.unit, f.family));
        }
        sha256_hex(text.as_bytes())[..16].to_string()
    }

    fn push(&mut self, name: impl Into<String>, unit: &str, family: FeatureFamily) {
        self.features.push(FeatureSpec { name: name.into(), unit: unit.into(), family });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub record_id: String,
    pub label: Label,
    pub schema: FeatureSchema,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.schema.index_of(name).map(|i| self.values[i])
    }
}

/// Multiplier per anatomical axis `[x, y, z]`, applied before any feature is
/// computed. Flip an entry to change which direction counts as positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignConventions {
    pub ankle: [f64; 3],
    pub knee: [f64; 3],
    pub hip: [f64; 3],
    pub foot: [f64; 3],
    pub pelvis: [f64; 3],
}

impl Default for SignConventions {
    fn default() -> Self {
        Self { ankle: [1.0; 3], knee: [1.0; 3], hip: [1.0; 3], foot: [1.0; 3], pelvis: [1.0; 3] }
    }
}

impl SignConventions {
    fn factor(&self, slot: Slot, axis: usize) -> f64 {
        match slot {
            Slot::Ankle => self.ankle[axis],
            Slot::Knee => self.knee[axis],
            Slot::Hip => self.hip[axis],
            Slot::Foot => self.foot[axis],
            Slot::Pelvis => self.pelvis[axis],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub signs: SignConventions,
    /// Adds pelvis sagittal excursion per stance as a vertical-oscillation proxy.
    pub vertical_oscillation: bool,
    pub band_powers: bool,
    pub demographics: bool,
    /// Fraction of stance at its end used for the heel-whip excursion.
    pub heel_whip_tail: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            signs: SignConventions::default(),
            vertical_oscillation: false,
            band_powers: true,
            demographics: true,
            heel_whip_tail: 0.2,
        }
    }
}

/// Position in a stance set: stance-side ankle, knee, hip, foot, then pelvis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Ankle = 0,
    Knee = 1,
    Hip = 2,
    Foot = 3,
    Pelvis = 4,
}

#[derive(Debug, Clone, Copy)]
enum Quantity {
    Peak(PeakDirection),
    Excursion,
    Velocity,
    PctPositive,
    /// First % of stance with a positive value; 100 when never positive.
    Onset,
    /// Last % of stance with a positive value; 100 when never positive.
    Offset,
    Mean,
    /// Excursion over the final `heel_whip_tail` of stance.
    TailExcursion,
}

struct AngleFeature {
    name: &'static str,
    slot: Slot,
    axis: usize,
    quantity: Quantity,
}

const fn af(name: &'static str, slot: Slot, axis: usize, quantity: Quantity) -> AngleFeature {
    AngleFeature { name, slot, axis, quantity }
}

const MAG: Quantity = Quantity::Peak(PeakDirection::Magnitude);

// x sagittal, y frontal, z transverse.
const ANGLE_FEATURES: &[AngleFeature] = &[
    af("pelvis_drop_peak", Slot::Pelvis, 1, MAG),
    af("pelvis_drop_excursion", Slot::Pelvis, 1, Quantity::Excursion),
    af("ankle_eversion_pct_time", Slot::Ankle, 1, Quantity::PctPositive),
    af("ankle_dorsiflexion_peak", Slot::Ankle, 0, Quantity::Peak(PeakDirection::Positive)),
    af("ankle_eversion_peak", Slot::Ankle, 1, MAG),
    af("ankle_eversion_excursion", Slot::Ankle, 1, Quantity::Excursion),
    af("ankle_rotation_peak", Slot::Ankle, 2, MAG),
    af("ankle_rotation_excursion", Slot::Ankle, 2, Quantity::Excursion),
    af("knee_flexion_peak", Slot::Knee, 0, Quantity::Peak(PeakDirection::Positive)),
    af("knee_abduction_peak", Slot::Knee, 1, MAG),
    af("knee_abduction_excursion", Slot::Knee, 1, Quantity::Excursion),
    af("knee_rotation_peak", Slot::Knee, 2, MAG),
    af("knee_rotation_excursion", Slot::Knee, 2, Quantity::Excursion),
    af("hip_extension_peak", Slot::Hip, 0, Quantity::Peak(PeakDirection::Negative)),
    af("hip_adduction_peak", Slot::Hip, 1, MAG),
    af("hip_adduction_excursion", Slot::Hip, 1, Quantity::Excursion),
    af("hip_rotation_peak", Slot::Hip, 2, MAG),
    af("hip_rotation_excursion", Slot::Hip, 2, Quantity::Excursion),
    af("foot_progression_angle", Slot::Foot, 2, Quantity::Mean),
    af("heel_whip_excursion", Slot::Foot, 2, Quantity::TailExcursion),
    af("pronation_onset_pct", Slot::Ankle, 1, Quantity::Onset),
    af("pronation_offset_pct", Slot::Ankle, 1, Quantity::Offset),
    af("ankle_eversion_velocity", Slot::Ankle, 1, Quantity::Velocity),
    af("ankle_rotation_velocity", Slot::Ankle, 2, Quantity::Velocity),
    af("knee_abduction_velocity", Slot::Knee, 1, Quantity::Velocity),
    af("knee_rotation_velocity", Slot::Knee, 2, Quantity::Velocity),
    af("hip_adduction_velocity", Slot::Hip, 1, Quantity::Velocity),
    af("hip_rotation_velocity", Slot::Hip, 2, Quantity::Velocity),
    af("pelvis_drop_velocity", Slot::Pelvis, 1, Quantity::Velocity),
];

const VERTICAL_OSCILLATION: AngleFeature = af("vertical_oscillation", Slot::Pelvis, 0, Quantity::Excursion);

fn unit_family(q: Quantity) -> (&'static str, FeatureFamily) {
    match q {
        Quantity::Peak(_) | Quantity::Mean => ("deg", FeatureFamily::Peak),
        Quantity::Excursion | Quantity::TailExcursion => ("deg", FeatureFamily::Excursion),
        Quantity::Velocity => ("deg/s", FeatureFamily::VelocityPeak),
        Quantity::PctPositive | Quantity::Onset | Quantity::Offset => ("%", FeatureFamily::PctTime),
    }
}

fn stance_value(series: &[f64], q: Quantity, dt: f64, tail: f64) -> Result<f64> {
    let n = series.len();
    let pct_at = |i: usize| 100.0 * i as f64 / (n - 1) as f64;
    match q {
        Quantity::Peak(dir) => peak_in(series, dir),
        Quantity::Excursion => excursion(series),
        Quantity::Velocity => peak_velocity(series, dt),
        Quantity::PctPositive => pct_time(series, |v| v > 0.0),
        Quantity::Onset => Ok(series.iter().position(|&v| v > 0.0).map_or(100.0, pct_at)),
        Quantity::Offset => Ok(series.iter().rposition(|&v| v > 0.0).map_or(100.0, pct_at)),
        Quantity::Mean => Ok(series.iter().sum::<f64>() / n as f64),
        Quantity::TailExcursion => {
            let from = ((n - 1) as f64 * (1.0 - tail)).floor() as usize;
            Ok(primitives::range(&series[from.min(n - 2)..]))
        }
    }
}

fn slot_of(slot: Slot) -> usize {
    slot as usize
}

/// Averages a stance-phase quantity over every phase, each on its own side's
/// structure and the raw (un-resampled) frames. `None` if a structure is missing.
fn angle_feature(
    record: &RunnerRecord,
    phases: &[StancePhase],
    f: &AngleFeature,
    cfg: &FeatureConfig,
) -> Result<Option<f64>> {
    let dt = 1.0 / record.sample_rate();
    let sign = cfg.signs.factor(f.slot, f.axis);
    let mut sum = 0.0;
    for p in phases {
        let Some(series) = record.series(p.structures[slot_of(f.slot)]) else {
            return Ok(None);
        };
        let slice: Vec<f64> = series.angles[p.start_frame..=p.end_frame].iter().map(|a| sign * a[f.axis]).collect();
        sum += stance_value(&slice, f.quantity, dt, cfg.heel_whip_tail)?;
    }
    Ok(Some(sum / phases.len() as f64))
}

const AXES: [&str; 3] = ["x", "y", "z"];

pub fn extract_features(
    record: &RunnerRecord,
    phases: &[StancePhase],
    summary: &SpatioTemporalSummary,
    cfg: &FeatureConfig,
) -> Result<FeatureVector> {
    if phases.is_empty() {
        return Err(FeatureError::EmptyPhases);
    }
    let mut schema = FeatureSchema::default();
    let mut values = Vec::new();
    let mut emit = |schema: &mut FeatureSchema, name: String, unit: &str, family: FeatureFamily, v: f64| {
        schema.push(name, unit, family);
        values.push(v);
    };

    emit(&mut schema, "stride_rate".into(), "strides/min", FeatureFamily::Spatiotemporal, summary.stride_rate);
    if let Some(len) = summary.stride_length {
        emit(&mut schema, "stride_length".into(), "m", FeatureFamily::Spatiotemporal, len);
    }
    emit(&mut schema, "stance_pct".into(), "%", FeatureFamily::Spatiotemporal, summary.stance_pct);
    emit(&mut schema, "swing_pct".into(), "%", FeatureFamily::Spatiotemporal, summary.swing_pct);
    if let Some(w) = summary.step_width {
        emit(&mut schema, "step_width".into(), "m", FeatureFamily::Spatiotemporal, w);
    }

    let extra = cfg.vertical_oscillation.then_some(&VERTICAL_OSCILLATION);
    for f in ANGLE_FEATURES.iter().chain(extra) {
        match angle_feature(record, phases, f, cfg)? {
            Some(v) => {
                let (unit, family) = unit_family(f.quantity);
                emit(&mut schema, f.name.into(), unit, family, v);
            }
            None => log::warn!("record {}: {} omitted, structure missing", record.record_id, f.name),
        }
    }

    if cfg.band_powers {
        for s in Structure::ALL {
            let Some(series) = record.series(s) else {
                log::warn!("record {}: band powers of {s} omitted, structure missing", record.record_id);
                continue;
            };
            for (axis, axis_name) in AXES.iter().enumerate() {
                let bp = band_power(&series.axis(axis), series.sample_rate)?;
                for (band, v) in [("lf", bp.lf), ("mf", bp.mf), ("hf", bp.hf)] {
                    emit(&mut schema, format!("{s}_{axis_name}_{band}_power"), "deg^2", FeatureFamily::BandPower, v);
                }
            }
        }
    }

    if cfg.demographics {
        let m = &record.subject;
        emit(&mut schema, "age".into(), "years", FeatureFamily::Demographic, m.age);
        emit(&mut schema, "height".into(), "m", FeatureFamily::Demographic, m.height);
        emit(&mut schema, "weight".into(), "kg", FeatureFamily::Demographic, m.weight);
        for (name, hit) in [("sex_F", m.sex == Sex::F), ("sex_M", m.sex == Sex::M), ("sex_other", m.sex == Sex::Other)] {
            emit(&mut schema, name.into(), "1", FeatureFamily::Demographic, f64::from(u8::from(hit)));
        }
        for (name, hit) in [
            ("dominant_leg_L", m.dominant_leg == DominantLeg::L),
            ("dominant_leg_R", m.dominant_leg == DominantLeg::R),
            ("dominant_leg_unknown", m.dominant_leg == DominantLeg::Unknown),
        ] {
            emit(&mut schema, name.into(), "1", FeatureFamily::Demographic, f64::from(u8::from(hit)));
        }
    }

    Ok(FeatureVector { record_id: record.record_id.clone(), label: record.label, schema, values })
}

/// Stacks vectors into rows; every vector must carry the same schema.
pub fn feature_matrix(vectors: &[FeatureVector]) -> Result<(FeatureSchema, Vec<Vec<f64>>)> {
    let first = vectors.first().ok_or(FeatureError::EmptyMatrix)?;
    let hash = first.schema.hash();
    for v in vectors {
        if v.schema.hash() != hash {
            return Err(FeatureError::SchemaMismatch(format!("record {} has a different feature schema", v.record_id)));
        }
    }
    Ok((first.schema.clone(), vectors.iter().map(|v| v.values.clone()).collect()))
}
