//! Running-gait injury-risk pipeline: ingestion, stance segmentation, point
//! features, classical classifiers, subject-wise evaluation and attribution maps.

pub mod dataset;
pub mod gait;
pub mod numfmt;
pub mod seed;
pub mod synth;
pub mod features;
pub mod pipeline;
pub mod classic;
pub mod eval;
pub mod explain;
