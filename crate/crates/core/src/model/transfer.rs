use serde::{Deserialize, Serialize};

use crate::ctc::Charset;
use crate::error::{Error, Result};
use crate::model::checkpoint::Checkpoint;
use crate::model::network::SpanModel;
use crate::tensor::Element;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferMode {
    /// Every parameter whose name and shape match.
    Full,
    /// Encoder parameters only; the decoder keeps its initialization.
    EncoderOnly,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TransferReport {
    pub copied: Vec<String>,
    pub fresh: Vec<String>,
}

impl TransferReport {
    pub fn copied_fraction(&self) -> f64 {
        let total = self.copied.len() + self.fresh.len();
        if total == 0 {
            0.0
        } else {
            self.copied.len() as f64 / total as f64
        }
    }
}

/// Initializes `target` from a checkpoint of the same charset, e.g. a
/// line-level pooled model into the paragraph model.
pub fn transfer_weights<E: Element>(
    source: &Checkpoint,
    target: &mut SpanModel<E>,
    target_charset: &Charset,
    mode: TransferMode,
) -> Result<TransferReport> {
    let src_charset = &source.header.charset;
    if src_charset != target_charset {
        let decoder = "decoder.weight";
        let src_shape = source.value(decoder).map(|v| v.shape().to_vec());
        let dst_shape = target.params().index_of(decoder).map(|id| target.params().value(id).shape().to_vec());
        return Err(Error::CharsetMismatch(format!(
            "source charset has {} symbols, target {}; parameter {decoder} is {:?} in the source and {:?} in the target",
            src_charset.len(),
            target_charset.len(),
            src_shape.unwrap_or_default(),
            dst_shape.unwrap_or_default(),
        )));
    }
    let mut report = TransferReport::default();
    for id in 0..target.params().len() {
        let name = target.params().name(id).to_string();
        let eligible = mode == TransferMode::Full || name.starts_with("encoder.");
        let source_value = source.value(&name).filter(|v| v.shape() == target.params().value(id).shape());
        match (eligible, source_value) {
            (true, Some(v)) => {
                target.params_mut().set(id, v.cast())?;
                report.copied.push(name);
            }
            _ => report.fresh.push(name),
        }
    }
    Ok(report)
}
