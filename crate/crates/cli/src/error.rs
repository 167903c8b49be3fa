use gaitrisk_core::classic::ModelError;
use gaitrisk_core::dataset::DatasetError;
use gaitrisk_core::eval::EvalError;
use gaitrisk_core::explain::ExplainError;
use gaitrisk_core::features::FeatureError;
use gaitrisk_core::pipeline::PipelineError;
use gaitrisk_deepnet::NetError;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ErrorKind {
    UsageError,
    DataError,
    NumericalError,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::UsageError => 2,
            Self::DataError => 3,
            Self::NumericalError => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorKind,
    code: i32,
    message: &'a str,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::UsageError, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::DataError, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::NumericalError, message: message.into() }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        let r = ErrorReport { error: self.kind, code: self.kind.exit_code(), message: &self.message };
        serde_json::to_string(&r).expect("error report serialises")
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Divergence { .. } => Self::numerical(e.to_string()),
            NetError::InvalidConfig(_) => Self::usage(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NumericalFailure(_) => Self::numerical(e.to_string()),
            ModelError::InvalidHyper(_) => Self::usage(e.to_string()),
            ModelError::Net(n) => n.into(),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        if e.is_numerical() {
            return Self::numerical(e.to_string());
        }
        match e {
            EvalError::InvalidCell { .. } | EvalError::UnknownModel(_) | EvalError::EmptyGrid => Self::usage(e.to_string()),
            EvalError::Model(m) => m.into(),
            EvalError::Net(n) => n.into(),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<ExplainError> for CliError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::NoPositiveCases | ExplainError::Dimension(_) => Self::data(e.to_string()),
            ExplainError::Net(n) => n.into(),
            _ => Self::usage(e.to_string()),
        }
    }
}
