use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::tensor::Tensor;

/// Index of a parameter inside a [`ParameterStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named registry of trainable tensors, kept in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

/// One parameter in a serialized store: where its values sit in the blob.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob, in `f64` elements.
    pub offset: usize,
}

/// Text manifest describing a little-endian `f64` parameter blob.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamManifest {
    pub blob: String,
    pub params: Vec<ParamEntry>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NnError::DuplicateParam(name));
        }
        let id = ParamId(self.tensors.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Result<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Sum of the sizes of parameters whose name starts with `prefix`.
    pub fn parameter_count_with_prefix(&self, prefix: &str) -> usize {
        self.iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, t)| t.len())
            .sum()
    }

    /// Sets every trainable parameter's gradient to exact zeros.
    pub fn zero_grads(&mut self) {
        for t in self.tensors.iter_mut().filter(|t| t.requires_grad()) {
            let n = t.len();
            *t.grad_mut() = Some(vec![0.0; n]);
        }
    }

    pub fn clear_grads(&mut self) {
        for t in &mut self.tensors {
            t.clear_grad();
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &[f64]) {
        let t = &mut self.tensors[id.0];
        let n = t.len();
        let buf = t.grad_mut().get_or_insert_with(|| vec![0.0; n]);
        for (b, x) in buf.iter_mut().zip(g) {
            *b += x;
        }
    }

    /// Splits the store into a manifest and its little-endian blob.
    pub fn to_parts(&self, blob_name: &str) -> (ParamManifest, Vec<u8>) {
        let mut bytes = Vec::with_capacity(self.parameter_count() * 8);
        let mut params = Vec::with_capacity(self.len());
        let mut offset = 0;
        for (name, t) in self.iter() {
            params.push(ParamEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset,
            });
            for v in t.values() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            offset += t.len();
        }
        (
            ParamManifest {
                blob: blob_name.to_string(),
                params,
            },
            bytes,
        )
    }

    /// Rebuilds a store from a manifest and blob. All parameters come back
    /// trainable.
    pub fn from_parts(manifest: &ParamManifest, bytes: &[u8]) -> Result<Self> {
        if bytes.len() % 8 != 0 {
            return Err(NnError::Format(format!(
                "blob length {} is not a multiple of 8",
                bytes.len()
            )));
        }
        let floats: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let mut store = Self::new();
        for entry in &manifest.params {
            let n: usize = entry.shape.iter().product();
            let end = entry.offset + n;
            if end > floats.len() {
                return Err(NnError::Format(format!(
                    "parameter `{}` runs past the end of the blob",
                    entry.name
                )));
            }
            let t = Tensor::param(entry.shape.clone(), floats[entry.offset..end].to_vec())?;
            store.insert(entry.name.clone(), t)?;
        }
        Ok(store)
    }

    /// Writes `<stem>.json` (manifest) and `<stem>.bin` (blob) into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<ParamManifest> {
        let blob_name = format!("{stem}.bin");
        let (manifest, bytes) = self.to_parts(&blob_name);
        fs::write(dir.join(&blob_name), bytes)?;
        fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(manifest)
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let manifest: ParamManifest =
            serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        let bytes = fs::read(dir.join(&manifest.blob))?;
        Self::from_parts(&manifest, &bytes)
    }
}
