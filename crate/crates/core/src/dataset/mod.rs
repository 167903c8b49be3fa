//! Recording data model, validation, task filtering and CSV interchange.

mod io;
mod rotation;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_dataset, read_angle_csv, read_events_csv, save_dataset, write_angle_csv, write_events_csv, Manifest, ManifestRecord};
pub use rotation::{cardan_from_rotation, rotation_from_cardan, CardanAngles, Rotation};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing file {0}")]
    MissingFile(String),
    #[error("schema mismatch in {file}: {detail}")]
    SchemaMismatch { file: String, detail: String },
    #[error("record {record_id}: invalid {field}: {detail}")]
    InvariantViolation { record_id: String, field: String, detail: String },
    #[error("subject {0} has conflicting metadata")]
    InconsistentSubjectMeta(String),
    #[error("task {0} leaves one side of the binary problem empty")]
    EmptyResult(Task),
    #[error("not a rotation matrix: {0}")]
    NotARotation(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed json in {path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// Anatomical structures with a recorded angle triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Structure {
    #[serde(rename = "ankle_L")]
    AnkleL,
    #[serde(rename = "ankle_R")]
    AnkleR,
    #[serde(rename = "knee_L")]
    KneeL,
    #[serde(rename = "knee_R")]
    KneeR,
    #[serde(rename = "hip_L")]
    HipL,
    #[serde(rename = "hip_R")]
    HipR,
    #[serde(rename = "foot_L")]
    FootL,
    #[serde(rename = "foot_R")]
    FootR,
    #[serde(rename = "pelvis")]
    Pelvis,
}

impl Structure {
    pub const ALL: [Structure; 9] = [
        Structure::AnkleL,
        Structure::AnkleR,
        Structure::KneeL,
        Structure::KneeR,
        Structure::HipL,
        Structure::HipR,
        Structure::FootL,
        Structure::FootR,
        Structure::Pelvis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Structure::AnkleL => "ankle_L",
            Structure::AnkleR => "ankle_R",
            Structure::KneeL => "knee_L",
            Structure::KneeR => "knee_R",
            Structure::HipL => "hip_L",
            Structure::HipR => "hip_R",
            Structure::FootL => "foot_L",
            Structure::FootR => "foot_R",
            Structure::Pelvis => "pelvis",
        }
    }

    /// Ankle, knee, hip and foot of one side followed by the pelvis.
    pub fn stance_set(foot: Foot) -> [Structure; 5] {
        match foot {
            Foot::L => [Structure::AnkleL, Structure::KneeL, Structure::HipL, Structure::FootL, Structure::Pelvis],
            Foot::R => [Structure::AnkleR, Structure::KneeR, Structure::HipR, Structure::FootR, Structure::Pelvis],
        }
    }

    pub fn foot_segment(foot: Foot) -> Structure {
        match foot {
            Foot::L => Structure::FootL,
            Foot::R => Structure::FootR,
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Structure {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Structure::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| format!("unknown structure {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    F,
    M,
    #[serde(rename = "other")]
    Other,
}

impl FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "F" => Ok(Sex::F),
            "M" => Ok(Sex::M),
            "other" => Ok(Sex::Other),
            _ => Err(format!("unknown sex {s:?}")),
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::F => "F",
            Sex::M => "M",
            Sex::Other => "other",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DominantLeg {
    L,
    R,
    #[serde(rename = "unknown")]
    Unknown,
}

impl FromStr for DominantLeg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "L" => Ok(DominantLeg::L),
            "R" => Ok(DominantLeg::R),
            "unknown" => Ok(DominantLeg::Unknown),
            _ => Err(format!("unknown dominant leg {s:?}")),
        }
    }
}

impl fmt::Display for DominantLeg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DominantLeg::L => "L",
            DominantLeg::R => "R",
            DominantLeg::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMeta {
    pub subject_id: String,
    /// Years.
    pub age: f64,
    /// Meters.
    pub height: f64,
    /// Kilograms.
    pub weight: f64,
    pub sex: Sex,
    pub dominant_leg: DominantLeg,
}

impl SubjectMeta {
    pub fn validate(&self, record_id: &str) -> Result<()> {
        let bad = |field: &str, detail: String| DatasetError::InvariantViolation {
            record_id: record_id.to_string(),
            field: field.to_string(),
            detail,
        };
        if self.subject_id.is_empty() {
            return Err(bad("subject_id", "empty".into()));
        }
        let ranges = [("age", self.age, 0.0, 120.0), ("height", self.height, 0.5, 2.5), ("weight", self.weight, 20.0, 200.0)];
        for (field, v, lo, hi) in ranges {
            if !(v > lo && v < hi) {
                return Err(bad(field, format!("{v} outside ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

/// Cardan angle triples (degrees) of one structure at a constant rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSeries {
    pub structure: Structure,
    pub angles: Vec<[f64; 3]>,
    pub sample_rate: f64,
}

impl AngleSeries {
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn axis(&self, axis: usize) -> Vec<f64> {
        self.angles.iter().map(|a| a[axis]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "healthy")]
    Healthy,
    #[serde(rename = "PFPS")]
    Pfps,
    #[serde(rename = "ITBS")]
    Itbs,
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "healthy" => Ok(Label::Healthy),
            "PFPS" => Ok(Label::Pfps),
            "ITBS" => Ok(Label::Itbs),
            _ => Err(format!("unknown label {s:?}")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Healthy => "healthy",
            Label::Pfps => "PFPS",
            Label::Itbs => "ITBS",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Foot {
    L,
    R,
}

impl Foot {
    pub const BOTH: [Foot; 2] = [Foot::L, Foot::R];
}

impl FromStr for Foot {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "L" => Ok(Foot::L),
            "R" => Ok(Foot::R),
            _ => Err(format!("unknown foot {s:?}")),
        }
    }
}

impl fmt::Display for Foot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Foot::L => "L",
            Foot::R => "R",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TouchDown,
    ToeOff,
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "touch_down" => Ok(EventKind::TouchDown),
            "toe_off" => Ok(EventKind::ToeOff),
            _ => Err(format!("unknown event kind {s:?}")),
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::TouchDown => "touch_down",
            EventKind::ToeOff => "toe_off",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GaitEvent {
    pub kind: EventKind,
    pub foot: Foot,
    pub frame_index: usize,
}

/// Checks per-foot alternation (touch-down first), strict per-foot ordering,
/// overall ordering by frame and the frame bound.
pub fn validate_events(record_id: &str, events: &[GaitEvent], len: usize) -> Result<()> {
    let bad = |detail: String| DatasetError::InvariantViolation {
        record_id: record_id.to_string(),
        field: "events".into(),
        detail,
    };
    if events.windows(2).any(|w| w[1].frame_index < w[0].frame_index) {
        return Err(bad("events are not sorted by frame".into()));
    }
    for foot in Foot::BOTH {
        let mut expect = EventKind::TouchDown;
        let mut last: Option<usize> = None;
        for e in events.iter().filter(|e| e.foot == foot) {
            if e.frame_index >= len {
                return Err(bad(format!("frame {} beyond series length {len}", e.frame_index)));
            }
            if e.kind != expect {
                return Err(bad(format!("foot {foot}: expected {expect} at frame {}", e.frame_index)));
            }
            if last.is_some_and(|l| e.frame_index <= l) {
                return Err(bad(format!("foot {foot}: frame {} not after {}", e.frame_index, last.unwrap_or(0))));
            }
            last = Some(e.frame_index);
            expect = match expect {
                EventKind::TouchDown => EventKind::ToeOff,
                EventKind::ToeOff => EventKind::TouchDown,
            };
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunnerRecord {
    pub record_id: String,
    pub subject: SubjectMeta,
    /// At most one series per structure, in [`Structure::ALL`] order.
    pub series: Vec<AngleSeries>,
    pub label: Label,
    pub events: Option<Vec<GaitEvent>>,
    /// Treadmill belt speed in m/s when known.
    pub treadmill_speed: Option<f64>,
}

impl RunnerRecord {
    pub fn series(&self, s: Structure) -> Option<&AngleSeries> {
        self.series.iter().find(|x| x.structure == s)
    }

    pub fn sample_rate(&self) -> f64 {
        self.series.first().map_or(0.0, |s| s.sample_rate)
    }

    pub fn len(&self) -> usize {
        self.series.first().map_or(0, AngleSeries::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, detail: String| DatasetError::InvariantViolation {
            record_id: self.record_id.clone(),
            field: field.to_string(),
            detail,
        };
        if self.record_id.is_empty() {
            return Err(bad("record_id", "empty".into()));
        }
        self.subject.validate(&self.record_id)?;
        let first = self.series.first().ok_or_else(|| bad("series", "no angle series".into()))?;
        let (len, rate) = (first.len(), first.sample_rate);
        let mut seen = Vec::new();
        for s in &self.series {
            let name = s.structure.name();
            if seen.contains(&s.structure) {
                return Err(bad(name, "duplicate structure".into()));
            }
            seen.push(s.structure);
            if !(s.sample_rate > 0.0 && s.sample_rate.is_finite()) {
                return Err(bad(name, format!("sample rate {} must be > 0", s.sample_rate)));
            }
            if s.sample_rate != rate {
                return Err(bad(name, format!("sample rate {} differs from {rate}", s.sample_rate)));
            }
            if s.len() != len {
                return Err(bad(name, format!("length {} differs from {len}", s.len())));
            }
            if (s.len() as f64) < 2.0 * s.sample_rate {
                return Err(bad(name, format!("{} frames is shorter than 2 s at {} Hz", s.len(), s.sample_rate)));
            }
            if let Some(i) = s.angles.iter().position(|a| a.iter().any(|v| !v.is_finite())) {
                return Err(bad(name, format!("non-finite sample at frame {i}")));
            }
        }
        if let Some(speed) = self.treadmill_speed {
            if !(speed > 0.0 && speed.is_finite()) {
                return Err(bad("treadmill_speed", format!("{speed} must be > 0")));
            }
        }
        if let Some(ev) = &self.events {
            validate_events(&self.record_id, ev, len)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub healthy: usize,
    pub pfps: usize,
    pub itbs: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<RunnerRecord>,
}

impl Dataset {
    /// Validates every record and the one-metadata-per-subject rule.
    pub fn new(records: Vec<RunnerRecord>) -> Result<Self> {
        let mut subjects: BTreeMap<&str, &SubjectMeta> = BTreeMap::new();
        let mut ids = std::collections::HashSet::new();
        for r in &records {
            r.validate()?;
            if !ids.insert(r.record_id.as_str()) {
                return Err(DatasetError::InvariantViolation {
                    record_id: r.record_id.clone(),
                    field: "record_id".into(),
                    detail: "duplicate".into(),
                });
            }
            match subjects.get(r.subject.subject_id.as_str()) {
                Some(m) if **m != r.subject => return Err(DatasetError::InconsistentSubjectMeta(r.subject.subject_id.clone())),
                Some(_) => {}
                None => {
                    subjects.insert(&r.subject.subject_id, &r.subject);
                }
            }
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct subjects in first-appearance order.
    pub fn subjects(&self) -> Vec<&SubjectMeta> {
        let mut out: Vec<&SubjectMeta> = Vec::new();
        for r in &self.records {
            if !out.iter().any(|s| s.subject_id == r.subject.subject_id) {
                out.push(&r.subject);
            }
        }
        out
    }

    pub fn class_counts(&self) -> ClassCounts {
        let mut c = ClassCounts::default();
        for r in &self.records {
            match r.label {
                Label::Healthy => c.healthy += 1,
                Label::Pfps => c.pfps += 1,
                Label::Itbs => c.itbs += 1,
            }
        }
        c
    }
}

/// The three binary detection problems; the injured side is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "PFPS_ITBS_vs_H")]
    PfpsItbsVsH,
    #[serde(rename = "PFPS_vs_H")]
    PfpsVsH,
    #[serde(rename = "ITBS_vs_H")]
    ItbsVsH,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::PfpsItbsVsH, Task::PfpsVsH, Task::ItbsVsH];

    pub fn name(self) -> &'static str {
        match self {
            Task::PfpsItbsVsH => "PFPS_ITBS_vs_H",
            Task::PfpsVsH => "PFPS_vs_H",
            Task::ItbsVsH => "ITBS_vs_H",
        }
    }

    /// `Some(1)` for the positive side, `Some(0)` for healthy, `None` when dropped.
    pub fn binary_label(self, label: Label) -> Option<u8> {
        match (self, label) {
            (_, Label::Healthy) => Some(0),
            (Task::PfpsItbsVsH, _) | (Task::PfpsVsH, Label::Pfps) | (Task::ItbsVsH, Label::Itbs) => Some(1),
            _ => None,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    /// Accepts the full names and the short forms `PFPS`, `ITBS`, `PFPS_ITBS` / `PFPS+ITBS`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "PFPS_ITBS_vs_H" | "PFPS_ITBS" | "PFPS+ITBS" | "both" => Ok(Task::PfpsItbsVsH),
            "PFPS_vs_H" | "PFPS" => Ok(Task::PfpsVsH),
            "ITBS_vs_H" | "ITBS" => Ok(Task::ItbsVsH),
            _ => Err(format!("unknown task {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub task: Task,
    pub records: Vec<RunnerRecord>,
    /// 1 = injured.
    pub labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }
}

pub fn class_filter(ds: &Dataset, task: Task) -> Result<LabeledDataset> {
    let (records, labels): (Vec<_>, Vec<_>) = ds
        .records
        .iter()
        .filter_map(|r| task.binary_label(r.label).map(|y| (r.clone(), y)))
        .unzip();
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(DatasetError::EmptyResult(task));
    }
    Ok(LabeledDataset { task, records, labels })
}
