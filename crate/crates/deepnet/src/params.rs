use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    /// Non-trainable entries hold running statistics (batch norm).
    pub trainable: bool,
    /// Coefficient of the `l2 * ||w||^2` penalty added to the training loss.
    pub l2: f64,
}

/// Owns every parameter of a network, in creation order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.push(name.into(), value, true, 0.0)
    }

    pub fn add_regularized(&mut self, name: impl Into<String>, value: Tensor, l2: f64) -> ParamId {
        self.push(name.into(), value, true, l2)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.push(name.into(), value, false, 0.0)
    }

    fn push(&mut self, name: String, value: Tensor, trainable: bool, l2: f64) -> ParamId {
        self.entries.push(ParamEntry { name, value, trainable, l2 });
        ParamId(self.entries.len() - 1)
    }

    /// Fan-in scaled uniform initialisation `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn add_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        l2: f64,
        rng: &mut R,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        let value = Tensor::new(shape.to_vec(), data).expect("length matches shape");
        self.push(name.into(), value, true, l2)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.ids().filter(|id| self.entries[id.0].trainable)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Sets every parameter, trainable or not, to zero.
    pub fn zero_all(&mut self) {
        for e in &mut self.entries {
            e.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }
}

/// RMSprop: `s <- rho*s + (1-rho)*g^2`, `w <- w - lr*g/sqrt(s+eps)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RmsProp {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    state: Vec<Option<Vec<f64>>>,
}

impl RmsProp {
    pub fn new(lr: f64, rho: f64, eps: f64) -> Self {
        Self { lr, rho, eps, state: Vec::new() }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Tensor)]) {
        if self.state.len() < store.len() {
            self.state.resize(store.len(), None);
        }
        for (id, grad) in grads {
            if !store.entry(*id).trainable {
                continue;
            }
            let value = store.get_mut(*id);
            let s = self.state[id.0].get_or_insert_with(|| vec![0.0; grad.len()]);
            for ((w, g), s) in value.data_mut().iter_mut().zip(grad.data()).zip(s.iter_mut()) {
                *s = self.rho * *s + (1.0 - self.rho) * g * g;
                *w -= self.lr * g / (*s + self.eps).sqrt();
            }
        }
    }
}
