use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::tensor::NdArray;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Optional global gradient-norm clip.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, clip_norm: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// A gradient held NaN or infinity; nothing was changed.
    SkippedNonFinite,
}

/// Bias-corrected Adam. Moments are created lazily per parameter and a
/// parameter without a gradient is left untouched.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Option<NdArray<f32>>>,
    second: Vec<Option<NdArray<f32>>>,
    skipped: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, first: Vec::new(), second: Vec::new(), skipped: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn skipped_steps(&self) -> u64 {
        self.skipped
    }

    pub fn step(&mut self, params: &mut ParamStore<f32>, grads: &[Option<NdArray<f32>>]) -> Result<StepOutcome> {
        if grads.len() != params.len() {
            return Err(Error::shape("adam", format!("{} gradients for {} parameters", grads.len(), params.len())));
        }
        for (id, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.shape() != params.value(id).shape() {
                    return Err(Error::shape(
                        "adam",
                        format!("gradient {:?} for {} {:?}", g.shape(), params.name(id), params.value(id).shape()),
                    ));
                }
                if !g.all_finite() {
                    self.skipped += 1;
                    warn!("non-finite gradient for {}; skipping optimizer step {}", params.name(id), self.step + 1);
                    return Ok(StepOutcome::SkippedNonFinite);
                }
            }
        }
        let scale = match self.config.clip_norm {
            Some(max) => {
                let norm = grads
                    .iter()
                    .flatten()
                    .flat_map(|g| g.data())
                    .map(|&v| (v as f64) * (v as f64))
                    .sum::<f64>()
                    .sqrt();
                if norm > max && norm > 0.0 { max / norm } else { 1.0 }
            }
            None => 1.0,
        };
        self.first.resize(params.len(), None);
        self.second.resize(params.len(), None);
        self.step += 1;
        let AdamConfig { learning_rate: lr, beta1: b1, beta2: b2, epsilon: eps, .. } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (id, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let shape = g.shape().to_vec();
            let m = self.first[id].get_or_insert_with(|| NdArray::zeros(shape.clone()));
            let v = self.second[id].get_or_insert_with(|| NdArray::zeros(shape));
            let p = params.value_mut(id);
            let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
            for (i, &gi) in g.data().iter().enumerate() {
                let gi = gi as f64 * scale;
                let mi = b1 * md[i] as f64 + (1.0 - b1) * gi;
                let vi = b2 * vd[i] as f64 + (1.0 - b2) * gi * gi;
                md[i] = mi as f32;
                vd[i] = vi as f32;
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
                pd[i] = (pd[i] as f64 - update) as f32;
            }
        }
        Ok(StepOutcome::Applied)
    }
}
