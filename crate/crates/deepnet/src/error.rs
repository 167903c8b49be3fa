use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("network was built with a point-value branch but no points were supplied")]
    MissingBranchInput,
    #[error("point values supplied to a network without a point-value branch")]
    UnexpectedBranchInput,
    #[error("backward called on a graph that recorded no operations for the requested output")]
    GraphNotRecorded,
    #[error("training diverged at epoch {epoch}, update {update}: loss is not finite (last finite loss {last_finite_loss})")]
    Divergence {
        epoch: usize,
        update: usize,
        last_finite_loss: f64,
        /// Parameter snapshot taken just before the failing update.
        state_dump: Box<crate::params::ParamStore>,
    },
    #[error("training set needs at least one sample of each class")]
    SingleClass,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("weight blob is malformed: {0}")]
    BadBlob(String),
}

pub type Result<T> = std::result::Result<T, NetError>;
