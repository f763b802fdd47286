//! Named weight archive.
//!
//! Layout: the 8-byte magic `SPANCKPT`, a little-endian `u64` header length,
//! a UTF-8 JSON header (format version, dtype, architecture, model config,
//! charset, normalization statistics, parameter names and shapes), then
//! every parameter as raw little-endian `f32` values in header order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ctc::Charset;
use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::model::config::{Architecture, ModelConfig};
use crate::model::network::SpanModel;
use crate::tensor::{Element, NdArray};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SPANCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Optimizer and progress information recorded by training runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub regime: String,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub val_cer: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub dtype: String,
    pub architecture: Architecture,
    pub config: ModelConfig,
    pub charset: Charset,
    pub blank_index: usize,
    pub normalization: Option<NormStats>,
    pub training: Option<TrainingMeta>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub values: Vec<NdArray<f32>>,
}

impl Checkpoint {
    pub fn from_model<E: Element>(
        model: &SpanModel<E>,
        charset: &Charset,
        normalization: Option<NormStats>,
        training: Option<TrainingMeta>,
    ) -> Result<Self> {
        if charset.len() != model.config().charset_size {
            return Err(Error::CharsetMismatch(format!(
                "charset has {} symbols, model predicts {}",
                charset.len(),
                model.config().charset_size
            )));
        }
        let tensors = model
            .params()
            .iter()
            .map(|(name, v)| TensorEntry { name: name.to_string(), shape: v.shape().to_vec() })
            .collect();
        let values = model.params().iter().map(|(_, v)| v.cast::<f32>()).collect();
        Ok(Self {
            header: CheckpointHeader {
                format_version: FORMAT_VERSION,
                dtype: "f32".into(),
                architecture: model.architecture(),
                config: model.config().clone(),
                charset: charset.clone(),
                blank_index: charset.blank_index(),
                normalization,
                training,
                tensors,
            },
            values,
        })
    }

    pub fn value(&self, name: &str) -> Option<&NdArray<f32>> {
        self.header.tensors.iter().position(|t| t.name == name).map(|i| &self.values[i])
    }

    /// Rebuilds the network described by the header and loads every weight.
    pub fn to_model<E: Element>(&self) -> Result<SpanModel<E>> {
        let mut model = SpanModel::<E>::new(self.header.architecture, self.header.config.clone(), 0)?;
        let expected = model.params().len();
        if expected != self.values.len() {
            return Err(Error::Checkpoint(format!(
                "header lists {} tensors, configuration needs {expected}",
                self.values.len()
            )));
        }
        for (entry, value) in self.header.tensors.iter().zip(&self.values) {
            let id = model
                .params()
                .index_of(&entry.name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {}", entry.name)))?;
            model.params_mut().set(id, value.cast()).map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let payload: usize = self.values.iter().map(|v| v.len() * 4).sum();
        let mut out = Vec::with_capacity(16 + header.len() + payload);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.values {
            for x in v.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("missing SPANCKPT magic; not a checkpoint file".into()));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header_end = 16usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad(format!("header length {header_len} exceeds file size {}", bytes.len())))?;
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[16..header_end]).map_err(|e| bad(format!("header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {}", header.format_version)));
        }
        if header.dtype != "f32" {
            return Err(bad(format!("unsupported dtype {}", header.dtype)));
        }
        if header.blank_index != header.charset.blank_index() {
            return Err(bad(format!(
                "blank index {} inconsistent with {}-symbol charset",
                header.blank_index,
                header.charset.len()
            )));
        }
        let mut offset = header_end;
        let mut values = Vec::with_capacity(header.tensors.len());
        for entry in &header.tensors {
            let len: usize = entry.shape.iter().product();
            let end = offset + len * 4;
            if end > bytes.len() {
                return Err(bad(format!("truncated data for {}", entry.name)));
            }
            let data = bytes[offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            values.push(NdArray::from_vec(entry.shape.clone(), data)?);
            offset = end;
        }
        if offset != bytes.len() {
            return Err(bad(format!("{} trailing bytes after tensor data", bytes.len() - offset)));
        }
        Ok(Self { header, values })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes()?).map_err(|e| Error::io("<writer>", e))
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io("<reader>", e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
