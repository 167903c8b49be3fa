use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::layers::ForwardCtx;
use crate::nets::{CnnConfig, CnnNet, LstmConfig, LstmNet, NetOutput, Network};
use crate::params::ParamStore;
use crate::weights;

pub const ENVELOPE_VERSION: u32 = 1;

/// Either of the two deep architectures behind one [`Network`] surface.
#[derive(Debug, Clone)]
pub enum DeepModel {
    Cnn(CnnNet),
    Lstm(LstmNet),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "snake_case")]
pub enum ArchitectureConfig {
    Cnn(CnnConfig),
    Lstm(LstmConfig),
}

/// JSON half of a serialized network; the weights travel in the companion blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEnvelope {
    pub version: u32,
    pub config: ArchitectureConfig,
    pub parameter_names: Vec<String>,
    pub parameter_shapes: Vec<Vec<usize>>,
}

impl DeepModel {
    pub fn build(config: &ArchitectureConfig) -> Result<Self> {
        Ok(match config {
            ArchitectureConfig::Cnn(c) => DeepModel::Cnn(CnnNet::new(c.clone())?),
            ArchitectureConfig::Lstm(c) => DeepModel::Lstm(LstmNet::new(c.clone())?),
        })
    }

    pub fn config(&self) -> ArchitectureConfig {
        match self {
            DeepModel::Cnn(n) => ArchitectureConfig::Cnn(n.config.clone()),
            DeepModel::Lstm(n) => ArchitectureConfig::Lstm(n.config.clone()),
        }
    }

    fn inner(&self) -> &dyn Network {
        match self {
            DeepModel::Cnn(n) => n,
            DeepModel::Lstm(n) => n,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Network {
        match self {
            DeepModel::Cnn(n) => n,
            DeepModel::Lstm(n) => n,
        }
    }

    pub fn to_envelope(&self) -> (NetworkEnvelope, Vec<u8>) {
        let store = self.store();
        let env = NetworkEnvelope {
            version: ENVELOPE_VERSION,
            config: self.config(),
            parameter_names: store.entries().iter().map(|e| e.name.clone()).collect(),
            parameter_shapes: store.entries().iter().map(|e| e.value.shape().to_vec()).collect(),
        };
        (env, weights::encode(store))
    }

    pub fn from_envelope(env: &NetworkEnvelope, blob: &[u8]) -> Result<Self> {
        let mut model = Self::build(&env.config)?;
        weights::decode_into(model.store_mut(), blob)?;
        Ok(model)
    }
}

impl Network for DeepModel {
    fn store(&self) -> &ParamStore {
        self.inner().store()
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        self.inner_mut().store_mut()
    }

    fn input_dims(&self) -> (usize, usize, usize) {
        self.inner().input_dims()
    }

    fn point_dims(&self) -> Option<usize> {
        self.inner().point_dims()
    }

    fn forward_vars(&self, g: &mut Graph, stance: Var, points: Option<Var>, ctx: &mut ForwardCtx) -> Result<NetOutput> {
        self.inner().forward_vars(g, stance, points, ctx)
    }
}
