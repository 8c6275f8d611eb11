use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CriticDims, CriticModel};
use crate::error::{Error, Result};
use crate::tensor::ParamSet;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Serialized critic: format version, dims, training seed and every
/// parameter tensor in the model's fixed visiting order. Stored as one JSON
/// document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub dims: CriticDims,
    pub seed: u64,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(model: &CriticModel, seed: u64) -> Self {
        let mut params = Vec::new();
        model.visit(&mut |name, shape, values| {
            params.push(NamedTensor {
                name: name.to_string(),
                shape: shape.to_vec(),
                values: values.to_vec(),
            })
        });
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            dims: *model.dims(),
            seed,
            params,
        }
    }

    /// Rebuilds the model, rejecting unknown versions and any tensor whose
    /// name, shape or length disagrees with `dims`.
    pub fn to_model(&self) -> Result<CriticModel> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointIncompatible(format!(
                "format version {} (supported: {CHECKPOINT_VERSION})",
                self.format_version
            )));
        }
        let mut model = CriticModel::zeros(self.dims)
            .map_err(|e| Error::CheckpointIncompatible(e.to_string()))?;
        let mut expected = Vec::new();
        model.visit(&mut |name, shape, v| expected.push((name.to_string(), shape.to_vec(), v.len())));
        if expected.len() != self.params.len() {
            return Err(Error::CheckpointIncompatible(format!(
                "{} tensors, expected {}",
                self.params.len(),
                expected.len()
            )));
        }
        for ((name, shape, len), t) in expected.iter().zip(&self.params) {
            if &t.name != name || &t.shape != shape || t.values.len() != *len {
                return Err(Error::CheckpointIncompatible(format!(
                    "tensor '{}' {:?} does not match expected '{name}' {shape:?}",
                    t.name, t.shape
                )));
            }
        }
        let mut idx = 0;
        model.visit_mut(&mut |_, _, v| {
            v.copy_from_slice(&self.params[idx].values);
            idx += 1;
        });
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.line(), e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn dims() -> CriticDims {
        CriticDims {
            word_dim: 3,
            feature_dim: 2,
            hidden_dim: 4,
            regressor_hidden: 3,
            buckets: 8,
        }
    }

    #[test]
    fn round_trip() {
        let model = CriticModel::init(dims(), &mut SeededRng::new(4)).unwrap();
        let ck = Checkpoint::from_model(&model, 4);
        let back: Checkpoint = serde_json::from_str(&ck.to_json()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_model().unwrap(), model);
    }

    #[test]
    fn rejects_version_and_shape_mismatch() {
        let model = CriticModel::init(dims(), &mut SeededRng::new(4)).unwrap();
        let mut ck = Checkpoint::from_model(&model, 4);
        ck.format_version = 2;
        assert!(matches!(ck.to_model(), Err(Error::CheckpointIncompatible(_))));

        let mut ck = Checkpoint::from_model(&model, 4);
        ck.dims.hidden_dim = 5;
        assert!(matches!(ck.to_model(), Err(Error::CheckpointIncompatible(_))));

        let mut ck = Checkpoint::from_model(&model, 4);
        ck.params[1].values.pop();
        assert!(matches!(ck.to_model(), Err(Error::CheckpointIncompatible(_))));
    }
}
