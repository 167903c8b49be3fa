//! Reverse-mode differentiation tape and the two deep gait classifiers.
//!
//! [`graph::Graph`] records tensor operations and replays them backwards;
//! [`layers`] builds dense, convolutional, normalisation, gating and
//! recurrent blocks on top of it; [`nets`] wires them into the dual-branch
//! Inception/SE CNN and the ConvLSTM/LSTM network; [`train`] runs RMSprop with
//! gradient accumulation and class-balanced batches.

pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod model;
pub mod nets;
pub mod params;
pub mod tensor;
pub mod train;
pub mod weights;

pub use error::{NetError, Result};
pub use graph::{Gradients, Graph, Var};
pub use layers::ForwardCtx;
pub use model::{ArchitectureConfig, DeepModel, NetworkEnvelope};
pub use nets::{build_lstm_net, CnnConfig, CnnNet, LstmConfig, LstmNet, NetInput, NetOutput, Network};
pub use params::{ParamId, ParamStore, RmsProp};
pub use tensor::Tensor;
pub use train::{predict_proba, train, BatchSampler, EpochStats, History, TrainConfig, TrainSet};
