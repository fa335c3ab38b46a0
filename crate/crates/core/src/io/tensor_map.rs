use std::collections::BTreeMap;
use std::path::Path;

use super::container::{self, Dtype, RawContainer};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Storage precision for [`NamedTensorMap::save`].
pub type Precision = Dtype;

/// A tensor held in a [`NamedTensorMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    matrix: Matrix,
    shape: Vec<usize>,
    dtype: Dtype,
}

impl TensorEntry {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Shape as stored on disk (1-D tensors keep their single dimension).
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Element type the tensor was loaded from, or `F64` for in-memory tensors.
    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }
}

/// Whether a tensor takes part in analysis and default merging: 2-D weights
/// that are not token embeddings or output heads.
pub fn is_analyzable(path: &str, entry: &TensorEntry) -> bool {
    entry.is_matrix()
        && !path
            .split('.')
            .any(|seg| seg.contains("embed") || seg == "lm_head" || seg == "wte" || seg == "wpe")
}

/// Named weight collection, ordered lexicographically by path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NamedTensorMap {
    tensors: BTreeMap<String, TensorEntry>,
    metadata: BTreeMap<String, String>,
}

impl NamedTensorMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a 2-D tensor, replacing any previous entry at `path`.
    pub fn insert(&mut self, path: impl Into<String>, matrix: Matrix) {
        let shape = vec![matrix.rows(), matrix.cols()];
        self.tensors.insert(
            path.into(),
            TensorEntry {
                matrix,
                shape,
                dtype: Dtype::F64,
            },
        );
    }

    /// Inserts a 1-D tensor (bias, norm scale), stored as a `1 × n` matrix.
    pub fn insert_vector(&mut self, path: impl Into<String>, values: &[f64]) -> Result<()> {
        let matrix = Matrix::from_row_major(1, values.len(), values)?;
        self.tensors.insert(
            path.into(),
            TensorEntry {
                matrix,
                shape: vec![values.len()],
                dtype: Dtype::F64,
            },
        );
        Ok(())
    }

    /// Replaces the values at an existing path, keeping its on-disk shape.
    pub(crate) fn replace_values(&mut self, path: &str, matrix: Matrix) {
        let entry = self.tensors.get_mut(path).expect("path exists");
        debug_assert_eq!(entry.matrix.shape(), matrix.shape());
        entry.matrix = matrix;
    }

    pub(crate) fn insert_entry(&mut self, path: String, entry: TensorEntry) {
        self.tensors.insert(path, entry);
    }

    pub fn get(&self, path: &str) -> Option<&Matrix> {
        self.tensors.get(path).map(|e| &e.matrix)
    }

    pub fn entry(&self, path: &str) -> Option<&TensorEntry> {
        self.tensors.get(path)
    }

    pub fn contains(&self, path: &str) -> bool {
        self.tensors.contains_key(path)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TensorEntry)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn analyzable_paths(&self) -> impl Iterator<Item = &str> {
        self.iter().filter(|(p, e)| is_analyzable(p, e)).map(|(p, _)| p)
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut BTreeMap<String, String> {
        &mut self.metadata
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let RawContainer { tensors, metadata } = container::decode(bytes)?;
        let mut map = NamedTensorMap {
            tensors: BTreeMap::new(),
            metadata,
        };
        for (name, raw) in tensors {
            let (rows, cols) = match raw.shape.as_slice() {
                [] => (1, 1),
                [n] => (1, *n),
                [d, k] => (*d, *k),
                dims => {
                    return Err(Error::Tensor {
                        tensor: name,
                        message: format!(
                            "{}-D tensor (shape {dims:?}); only 1-D and 2-D tensors are supported",
                            dims.len()
                        ),
                    })
                }
            };
            if rows == 0 || cols == 0 {
                return Err(Error::Tensor {
                    tensor: name,
                    message: format!("empty shape {:?}", raw.shape),
                });
            }
            let matrix = Matrix::from_row_major(rows, cols, &raw.values).map_err(|e| Error::Tensor {
                tensor: name.clone(),
                message: e.to_string(),
            })?;
            map.tensors.insert(
                name,
                TensorEntry {
                    matrix,
                    shape: raw.shape,
                    dtype: raw.dtype,
                },
            );
        }
        Ok(map)
    }

    pub fn to_bytes(&self, precision: Precision) -> Result<Vec<u8>> {
        let flat: Vec<(&str, &[usize], Vec<f64>)> = self
            .tensors
            .iter()
            .map(|(k, e)| (k.as_str(), e.shape.as_slice(), e.matrix.to_row_major()))
            .collect();
        container::encode(
            flat.iter().map(|(k, s, v)| (*k, *s, v.as_slice())),
            &self.metadata,
            precision,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>, precision: Precision) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes(precision)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

pub fn load_tensor_map(path: impl AsRef<Path>) -> Result<NamedTensorMap> {
    NamedTensorMap::load(path)
}

pub fn save_tensor_map(map: &NamedTensorMap, path: impl AsRef<Path>, precision: Precision) -> Result<()> {
    map.save(path, precision)
}
