//! Parameter snapshots as JSON. Floats are written in shortest round-trip
//! form and parsed exactly, so a save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "g2t-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSnapshot {
    pub format: String,
    pub version: u32,
    pub params: Vec<NamedTensor>,
}

impl ParamSnapshot {
    pub fn capture(store: &ParamStore) -> Self {
        ParamSnapshot {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            params: store
                .iter()
                .map(|(_, p)| NamedTensor {
                    name: p.name.clone(),
                    shape: p.value.shape(),
                    values: p.value.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Writes the snapshot's values into `store`, which must already hold
    /// parameters with the same names and shapes.
    pub fn restore(&self, store: &mut ParamStore) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        if self.params.len() != store.len() {
            return Err(Error::Data(format!(
                "checkpoint has {} parameters, model has {}",
                self.params.len(),
                store.len()
            )));
        }
        for named in &self.params {
            let id = store
                .id(&named.name)
                .ok_or_else(|| Error::Data(format!("model has no parameter `{}`", named.name)))?;
            let [r, c] = named.shape;
            if store.value(id).shape() != named.shape {
                return Err(Error::Data(format!(
                    "parameter `{}` has shape {:?} in checkpoint, {:?} in model",
                    named.name,
                    named.shape,
                    store.value(id).shape()
                )));
            }
            *store.value_mut(id) = Tensor::from_vec(r, c, named.values.clone())?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
