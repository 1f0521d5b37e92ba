//! Named parameter tensors and the on-disk checkpoint.
//!
//! A checkpoint directory holds `params.sgtf`, the tensors in name order as
//! consecutive binary64 SGTF records, and `checkpoint.json`, which lists names
//! and shapes next to the config and its hash.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sgh_core::tensor::Tensor;
use sgh_core::tensor_file::{read_tensor, write_tensor, Precision};

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::tape::{Tape, Var};

pub const CHECKPOINT_MANIFEST: &str = "checkpoint.json";
pub const CHECKPOINT_TENSORS: &str = "params.sgtf";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Parameters {
    tensors: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    config_hash: String,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

impl Parameters {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tensor; names must be unique and values finite.
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Result<()> {
        let name = name.into();
        if !t.is_finite() {
            return Err(ModelError::NonFinite { tensor: name, step: 0 });
        }
        if self.tensors.contains_key(&name) {
            return Err(ModelError::Config(format!("duplicate parameter `{name}`")));
        }
        self.tensors.insert(name, t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn element_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Name of the first tensor (in name order) holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.tensors.iter().find(|(_, t)| !t.is_finite()).map(|(k, _)| k.as_str())
    }

    /// Registers every tensor on `tape` as a named parameter.
    pub fn register(&self, tape: &mut Tape) -> ParamVars {
        ParamVars(self.tensors.iter().map(|(k, t)| (k.clone(), tape.param(k, t.clone()))).collect())
    }

    /// Registers every tensor as a leaf, for finite-difference checks.
    pub fn register_leaves(&self, tape: &mut Tape) -> ParamVars {
        ParamVars(self.tensors.iter().map(|(k, t)| (k.clone(), tape.leaf(k, t.clone()))).collect())
    }

    pub fn save(&self, dir: impl AsRef<Path>, config: &ModelConfig) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut file = std::io::BufWriter::new(std::fs::File::create(dir.join(CHECKPOINT_TENSORS))?);
        for t in self.tensors.values() {
            write_tensor(&mut file, t, Precision::F64)?;
        }
        file.flush()?;
        let manifest = Manifest {
            format: "sgh-checkpoint-v1".into(),
            config_hash: config.hash(),
            config: config.clone(),
            tensors: self.tensors.iter().map(|(k, t)| TensorEntry { name: k.clone(), shape: t.shape().to_vec() }).collect(),
        };
        std::fs::write(dir.join(CHECKPOINT_MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    /// Reads a checkpoint, checking the config hash and every tensor shape.
    pub fn load(dir: impl AsRef<Path>) -> Result<(ModelConfig, Self)> {
        let dir = dir.as_ref();
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join(CHECKPOINT_MANIFEST))?)?;
        if manifest.config.hash() != manifest.config_hash {
            return Err(ModelError::Checkpoint("config hash does not match the stored config".into()));
        }
        let bytes = std::fs::read(dir.join(CHECKPOINT_TENSORS))?;
        let mut reader = bytes.as_slice();
        let mut params = Parameters::new();
        for entry in &manifest.tensors {
            let t = read_tensor(&mut reader)?;
            if t.shape() != entry.shape.as_slice() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor `{}` has shape {:?}, manifest says {:?}",
                    entry.name,
                    t.shape(),
                    entry.shape
                )));
            }
            params.insert(entry.name.clone(), t)?;
        }
        if !reader.is_empty() {
            return Err(ModelError::Checkpoint(format!("{} unread bytes in tensor file", reader.len())));
        }
        Ok((manifest.config, params))
    }
}

/// Tensor with entries uniform in `[−bound, bound]`.
pub fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()).expect("shape")
}

/// Fan-in scaled weight `U(±1/√fan_in)` of shape `fan_in × fan_out` and a zero `1 × fan_out` bias.
pub fn insert_linear(params: &mut Parameters, prefix: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Result<()> {
    params.insert(format!("{prefix}.w"), uniform(&[fan_in, fan_out], 1.0 / (fan_in as f64).sqrt(), rng))?;
    params.insert(format!("{prefix}.b"), Tensor::zeros(&[1, fan_out]))
}

/// Tape handles for a parameter set, looked up by name.
#[derive(Clone, Debug, Default)]
pub struct ParamVars(BTreeMap<String, Var>);

impl ParamVars {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Var)>) -> Self {
        Self(pairs.into_iter().collect())
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.0.get(name).copied().ok_or_else(|| ModelError::Config(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}
