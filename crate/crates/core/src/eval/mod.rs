//! Subject-wise cross-validation, nested grid search and the four
//! classification metrics.

mod data;
mod experiment;
mod folds;
mod metrics;

pub use data::{ExperimentData, FoldInputs, StanceScaler};
pub use experiment::{
    fit_fold_model, grid_search, run_experiment, ExperimentConfig, ExperimentReport, FittedFoldModel, FoldResult,
    GridOutcome, MetricReport, MetricSummary, ModelChoice,
};
pub use folds::{split_by_subject, split_by_subject_stratified, Fold, FoldPlan};
pub use metrics::{metrics, ConfusionCounts, Metrics};

use thiserror::Error;

use crate::classic::{InputRegime, ModelError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least {need} distinct subjects, found {have}")]
    TooFewSubjects { need: usize, have: usize },
    #[error("subject leakage in fold {fold}: {subjects:?}")]
    Leakage { fold: usize, subjects: Vec<String> },
    #[error("fold plan does not cover subjects {0:?}")]
    Coverage(Vec<String>),
    #[error("no samples to evaluate")]
    EmptyCounts,
    #[error("model {model} does not accept the {} regime", regime.name())]
    InvalidCell { model: String, regime: InputRegime },
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("fold {fold} training data holds a single class")]
    SingleClassFold { fold: usize },
    #[error("experiment data: {0}")]
    Data(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Net(#[from] gaitrisk_deepnet::NetError),
    #[error(transparent)]
    Features(#[from] crate::features::FeatureError),
}

impl EvalError {
    /// Failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Self::Model(ModelError::NumericalFailure(_)) => true,
            Self::Net(e) => matches!(e, gaitrisk_deepnet::NetError::Divergence { .. }),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, EvalError>;
