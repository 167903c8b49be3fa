//! Gait events, stance segmentation and the mean/envelope stance tensor.

mod events;
mod spatiotemporal;
mod spline;
mod stance;

use thiserror::Error;

pub use events::{detect_events, detect_events_with, principal_score, EventConfig};
pub use spatiotemporal::{spatiotemporal, SpatioTemporalSummary};
pub use spline::{natural_cubic_resample, NaturalCubicSpline};
pub use stance::{build_stance_tensor, segment_stances, FootSelection, StancePhase, StanceTensor, CHANNELS, STANCE_SAMPLES};

use crate::dataset::{Foot, Structure};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaitError {
    #[error("record {record_id}: {structure} series is missing")]
    MissingStructure { record_id: String, structure: Structure },
    #[error("record {record_id}: foot {foot} shows a constant foot-segment signal")]
    DegenerateSignal { record_id: String, foot: Foot },
    #[error("record {record_id}: foot {foot} yields {found} stances, need at least 3")]
    NoEventsFound { record_id: String, foot: Foot, found: usize },
    #[error("stance of foot {foot} at frames {start}..={end} has fewer than 5 frames")]
    TooShort { foot: Foot, start: usize, end: usize },
    #[error("no stance phases for foot selection {0:?}")]
    NoPhases(FootSelection),
    #[error("insufficient events: {0}")]
    InsufficientEvents(String),
}

pub type Result<T> = std::result::Result<T, GaitError>;
