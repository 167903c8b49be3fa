//! Record-level preprocessing shared by the experiments and the CLI.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{GaitEvent, Label, RunnerRecord};
use crate::features::{extract_features, FeatureConfig, FeatureError, FeatureVector};
use crate::gait::{
    build_stance_tensor, detect_events_with, segment_stances, spatiotemporal, EventConfig, FootSelection, GaitError,
    StanceTensor,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub events: EventConfig,
    pub features: FeatureConfig,
    pub foot: FootSelection,
    /// Keep the right-stance pelvis as a tenth slot when both feet are stacked.
    pub pelvis_dup: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { events: EventConfig::default(), features: FeatureConfig::default(), foot: FootSelection::Both, pelvis_dup: true }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("record {record_id}: {source}")]
    Gait { record_id: String, source: GaitError },
    #[error("record {record_id}: {source}")]
    Features { record_id: String, source: FeatureError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedRecord {
    pub record_id: String,
    pub subject_id: String,
    pub label: Label,
    pub events: Vec<GaitEvent>,
    pub tensor: StanceTensor,
    pub features: FeatureVector,
}

pub fn process_record(record: &RunnerRecord, cfg: &PreprocessConfig) -> Result<ProcessedRecord, PipelineError> {
    let gait = |source| PipelineError::Gait { record_id: record.record_id.clone(), source };
    let events = detect_events_with(record, &cfg.events).map_err(gait)?;
    let phases = segment_stances(record, &events).map_err(gait)?;
    let summary = spatiotemporal(&events, record.sample_rate(), record.treadmill_speed).map_err(gait)?;
    let tensor = build_stance_tensor(&phases, cfg.foot, cfg.pelvis_dup, &record.record_id).map_err(gait)?;
    let features = extract_features(record, &phases, &summary, &cfg.features)
        .map_err(|source| PipelineError::Features { record_id: record.record_id.clone(), source })?;
    Ok(ProcessedRecord {
        record_id: record.record_id.clone(),
        subject_id: record.subject.subject_id.clone(),
        label: record.label,
        events,
        tensor,
        features,
    })
}

pub fn process_records(records: &[RunnerRecord], cfg: &PreprocessConfig) -> Result<Vec<ProcessedRecord>, PipelineError> {
    records.iter().map(|r| process_record(r, cfg)).collect()
}
