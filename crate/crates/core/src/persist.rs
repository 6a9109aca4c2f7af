//! Model parameter files.
//!
//! ```json
//! {"format_version": 1, "arch": "...", "params": {"name": {"shape": [r, c], "data": [...]}}, "meta": {...}}
//! ```
//!
//! `meta` carries the non-numeric state a model needs (vocabularies, mode,
//! seed). Floats are written with shortest round-trip formatting, so a
//! save/load cycle reproduces parameters bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{Matrix, Params};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u64),
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("model architecture {found:?} does not match expected {expected:?}")]
    WrongArch { expected: String, found: String },
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("parameter {name} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamFile {
    pub format_version: u32,
    pub arch: String,
    pub params: BTreeMap<String, Tensor>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl ParamFile {
    pub fn new(arch: &str, params: &impl Params, meta: serde_json::Value) -> Self {
        let params = params
            .params()
            .into_iter()
            .map(|(name, m)| {
                let t = Tensor {
                    shape: vec![m.rows(), m.cols()],
                    data: m.data().to_vec(),
                };
                (name, t)
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            arch: arch.to_owned(),
            params,
            meta,
        }
    }

    pub fn push_tensor(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f64>) {
        self.params.insert(
            name.to_owned(),
            Tensor {
                shape: vec![rows, cols],
                data,
            },
        );
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor, PersistError> {
        self.params
            .get(name)
            .ok_or_else(|| PersistError::MissingParam(name.to_owned()))
    }

    pub fn expect_arch(&self, expected: &str) -> Result<(), PersistError> {
        if self.arch == expected {
            Ok(())
        } else {
            Err(PersistError::WrongArch {
                expected: expected.to_owned(),
                found: self.arch.clone(),
            })
        }
    }

    /// Copies stored tensors into a model whose shapes are already set up.
    pub fn load_into(&self, model: &mut impl Params) -> Result<(), PersistError> {
        for (name, m) in model.params_mut() {
            let t = self.tensor(&name)?;
            let expected = vec![m.rows(), m.cols()];
            if t.shape != expected || t.data.len() != m.data().len() {
                return Err(PersistError::ShapeMismatch {
                    name,
                    expected,
                    found: t.shape.clone(),
                });
            }
            m.data_mut().copy_from_slice(&t.data);
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("param files serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, PersistError> {
        let value: serde_json::Value =
            serde_json::from_str(s).map_err(|e| PersistError::CorruptFile(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| PersistError::CorruptFile("missing format_version".into()))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(PersistError::UnsupportedVersion(version));
        }
        let file: ParamFile =
            serde_json::from_value(value).map_err(|e| PersistError::CorruptFile(e.to_string()))?;
        for (name, t) in &file.params {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(PersistError::CorruptFile(format!(
                    "tensor {name} has {} values for shape {:?}",
                    t.data.len(),
                    t.shape
                )));
            }
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PersistError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PersistError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

impl Tensor {
    pub fn to_matrix(&self) -> Option<Matrix> {
        match self.shape.as_slice() {
            [r, c] => Matrix::from_vec(*r, *c, self.data.clone()),
            [n] => Matrix::from_vec(*n, 1, self.data.clone()),
            _ => None,
        }
    }
}
