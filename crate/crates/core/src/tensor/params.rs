use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Tape, Tensor, TensorError, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named learnable tensors, kept outside any tape.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

/// The tape handles of a [`ParamStore`] bound for one forward pass.
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    /// Routes parameter `id` through `v` instead, e.g. a probe recorded by a
    /// gradient checker.
    pub fn replace(&mut self, id: ParamId, v: Var) {
        self.0[id.0] = v;
    }

    /// Per-parameter gradients after [`Tape::backward`]; parameters the loss did
    /// not reach get zeros.
    pub fn grads(&self, tape: &Tape) -> Vec<Vec<f64>> {
        self.0
            .iter()
            .map(|&v| match tape.grad(v) {
                Some(g) => g.to_vec(),
                None => vec![0.0; tape.value(v).len()],
            })
            .collect()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter name {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.values.iter_mut()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound(self.values.iter().map(|v| tape.param(v.clone())).collect())
    }

    pub fn to_named(&self) -> Vec<NamedArray> {
        self.names
            .iter()
            .zip(&self.values)
            .map(|(n, v)| NamedArray::new(n, v))
            .collect()
    }

    /// Overwrites values from `arrays`, which must list exactly this store's
    /// names with matching shapes.
    pub fn load_named(&mut self, arrays: &[NamedArray]) -> Result<(), TensorError> {
        if arrays.len() != self.values.len() {
            return Err(TensorError::Invalid(format!(
                "checkpoint has {} parameters, model expects {}",
                arrays.len(),
                self.values.len()
            )));
        }
        let mut staged = Vec::with_capacity(arrays.len());
        for (name, current) in self.names.iter().zip(&self.values) {
            let arr = arrays
                .iter()
                .find(|a| &a.name == name)
                .ok_or_else(|| TensorError::Invalid(format!("checkpoint is missing parameter {name}")))?;
            if arr.shape != current.shape() {
                return Err(TensorError::Invalid(format!(
                    "parameter {name}: checkpoint shape {:?}, model shape {:?}",
                    arr.shape,
                    current.shape()
                )));
            }
            staged.push(arr.to_tensor()?);
        }
        self.values = staged;
        Ok(())
    }
}

/// One entry of a parameter checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedArray {
    pub fn new(name: &str, t: &Tensor) -> Self {
        NamedArray {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        }
    }

    pub fn to_tensor(&self) -> Result<Tensor, TensorError> {
        Tensor::new(self.shape.clone(), self.data.clone())
    }
}

/// Text-JSON checkpoint: learnable parameters, non-learnable buffers
/// (normalization running statistics) and an optional config record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub params: Vec<NamedArray>,
    #[serde(default)]
    pub buffers: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(self).expect("checkpoint serializes");
        std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| TensorError::Invalid(format!("checkpoint {}: {e}", path.as_ref().display())).into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_validates_names_and_shapes() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::zeros(&[2, 3]));
        store.add("b", Tensor::zeros(&[2]));
        let mut named = store.to_named();
        named[0].data = vec![1.0; 6];
        store.load_named(&named).unwrap();
        assert_eq!(store.get(store.find("w").unwrap()).data(), &[1.0; 6]);

        let mut bad_shape = store.to_named();
        bad_shape[1].shape = vec![3];
        bad_shape[1].data = vec![0.0; 3];
        assert!(store.load_named(&bad_shape).unwrap_err().to_string().contains("parameter b"));

        let mut bad_name = store.to_named();
        bad_name[0].name = "q".into();
        assert!(store.load_named(&bad_name).unwrap_err().to_string().contains("missing parameter w"));
    }

    #[test]
    fn checkpoint_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let mut store = ParamStore::new();
        store.add("w", Tensor::matrix(1, 2, vec![0.25, -1.5]).unwrap());
        let ckpt = Checkpoint {
            config: None,
            params: store.to_named(),
            buffers: vec![],
        };
        ckpt.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ckpt);
    }
}
