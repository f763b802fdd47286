use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ctc::{best_path_decode_sequence, ctc_loss_batch, Charset};
use crate::data::{
    epoch_batches, make_batch, pad_to_reduction, validate_charset, AugmentConfig, AugmentationPlan, Batch, Dataset,
    NormStats, ParagraphSample,
};
use crate::error::{Error, Result};
use crate::metrics::{EvalReport, SampleScore};
use crate::model::{Checkpoint, ForwardCtx, ModelConfig, SpanModel, TrainingMeta, TransferMode};
use crate::tensor::{ops, NdArray, Tensor};
use crate::train::adam::{Adam, AdamConfig, StepOutcome};
use crate::train::regime::Regime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelSize {
    Full,
    Reduced,
}

impl ModelSize {
    pub fn config(self, charset_size: usize) -> ModelConfig {
        match self {
            ModelSize::Full => ModelConfig::full(charset_size),
            ModelSize::Reduced => ModelConfig::reduced(charset_size),
        }
    }
}

/// Everything a training run needs; TOML keys match the field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub regime: Regime,
    pub train_manifest: Option<PathBuf>,
    pub val_manifest: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Ignored when `init` is given; the checkpoint's network is used.
    pub model_size: ModelSize,
    /// Symbols of the charset; inferred from the training transcriptions
    /// (or taken from `init`) when absent.
    pub charset: Option<String>,
    /// Defaults to 16 for line regimes and 4 for paragraph regimes.
    pub batch_size: Option<usize>,
    pub max_steps: u64,
    pub max_wall_time_s: Option<f64>,
    /// Stop once a validation CER at or below this value is measured.
    pub target_cer: Option<f64>,
    pub seed: u64,
    /// Validation cadence in optimizer steps; 0 evaluates only at the end.
    pub eval_every: u64,
    /// Caps the number of validation samples scored per evaluation.
    pub val_limit: Option<usize>,
    pub adam: AdamConfig,
    pub dropout: bool,
    pub augment: bool,
    pub augmentation: AugmentConfig,
    pub transfer: TransferMode,
    pub threads: usize,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            regime: Regime::SpanScratch,
            train_manifest: None,
            val_manifest: None,
            init: None,
            out_dir: None,
            model_size: ModelSize::Full,
            charset: None,
            batch_size: None,
            max_steps: 1000,
            max_wall_time_s: None,
            target_cer: None,
            seed: 0,
            eval_every: 100,
            val_limit: None,
            adam: AdamConfig::default(),
            dropout: true,
            augment: true,
            augmentation: AugmentConfig::default(),
            transfer: TransferMode::Full,
            threads: 1,
        }
    }
}

impl TrainRunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size.unwrap_or(self.regime.default_batch_size()).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.regime.requires_init() && self.init.is_none() {
            return Err(Error::Config(format!("regime {} requires an initialization checkpoint", self.regime)));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.adam.learning_rate > 0.0 && self.adam.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// One metrics-log row. `ctc_loss` is the loss of batch `step` before its
/// update; `val_cer` is measured after that update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub ctc_loss: f64,
    pub val_cer: Option<f64>,
    pub wall_time_s: f64,
}

pub const LOG_HEADER: &str = "step,ctc_loss,val_cer,wall_time_s";

impl LogRow {
    pub fn to_csv(&self) -> String {
        let val = self.val_cer.map(|v| format!("{v:.6}")).unwrap_or_default();
        format!("{},{:.6},{},{:.3}", self.step, self.ctc_loss, val, self.wall_time_s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub loss: f64,
    pub skipped_samples: Vec<usize>,
    pub outcome: StepOutcome,
}

/// Model, optimizer and regularization RNG of a run.
pub struct Trainer {
    pub model: SpanModel<f32>,
    pub charset: Charset,
    pub adam: Adam,
    pub dropout: bool,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: SpanModel<f32>, charset: Charset, adam: AdamConfig, dropout: bool, seed: u64) -> Result<Self> {
        if model.config().charset_size != charset.len() {
            return Err(Error::CharsetMismatch(format!(
                "model predicts {} symbols, charset has {}",
                model.config().charset_size,
                charset.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Ok(Self { model, charset, adam: Adam::new(adam), dropout, rng })
    }

    /// Mean CTC loss of `batch` and its parameter gradients.
    pub fn loss_and_grads(&mut self, batch: &Batch) -> Result<(f64, Vec<usize>, Vec<Option<NdArray<f32>>>)> {
        let params = self.model.params().bind(true);
        let x = Tensor::constant(batch.images.clone());
        let cfg = self.model.config().clone();
        let lattice = if self.dropout {
            let mut ctx = ForwardCtx::train(&mut self.rng, cfg.dropout_elem_p, cfg.dropout_chan_p);
            self.model.forward_with(&x, &params, &mut ctx)?
        } else {
            self.model.forward_with(&x, &params, &mut ForwardCtx::<ChaCha8Rng>::eval())?
        };
        let log_probs = ops::log_softmax_lastdim(&lattice.flat)?;
        let out = ctc_loss_batch(&log_probs, &batch.labels, &lattice.valid_lengths, self.charset.blank_index())?;
        let loss = out.loss.value().item() as f64;
        let kept = batch.len() - out.skipped.len();
        if kept > 0 {
            out.loss.backward()?;
        }
        let grads = params.iter().map(Tensor::take_grad).collect();
        Ok((loss, out.skipped, grads))
    }

    pub fn step(&mut self, batch: &Batch) -> Result<StepReport> {
        let (loss, skipped, grads) = self.loss_and_grads(batch)?;
        if skipped.len() == batch.len() {
            warn!("every sample of the batch is infeasible; no update");
            return Ok(StepReport { loss, skipped_samples: skipped, outcome: StepOutcome::SkippedNonFinite });
        }
        let outcome = self.adam.step(self.model.params_mut(), &grads)?;
        Ok(StepReport { loss, skipped_samples: skipped, outcome })
    }
}

/// Best-path transcription of one preprocessed `[3, H, W]` image.
pub fn transcribe(model: &SpanModel<f32>, charset: &Charset, image: &NdArray<f32>) -> Result<String> {
    let shape = image.shape().to_vec();
    let x = image.clone().reshape([1, shape[0], shape[1], shape[2]])?;
    let lattice = model.predict(&x)?;
    Ok(best_path_decode_sequence(lattice.flat.value().data(), lattice.frames(), charset))
}

/// Decodes every sample and scores it against its transcription.
pub fn evaluate(model: &SpanModel<f32>, charset: &Charset, samples: &[ParagraphSample]) -> Result<EvalReport> {
    let mut scores = Vec::with_capacity(samples.len());
    for s in samples {
        let pred = transcribe(model, charset, &s.image)?;
        scores.push(SampleScore::new(s.source_id.clone(), &s.transcription, &pred));
    }
    Ok(EvalReport::from_samples(scores))
}

/// Loads a checkpoint's network and scores it on a manifest.
pub fn evaluate_checkpoint(checkpoint: &Checkpoint, manifest: &Path, threads: usize) -> Result<EvalReport> {
    let charset = &checkpoint.header.charset;
    let stats = checkpoint.header.normalization.clone().unwrap_or_else(NormStats::identity);
    let data = Dataset::load(manifest, Some(&stats), threads)?;
    if data.is_empty() {
        warn!("manifest {} has no records; empty report", manifest.display());
    }
    validate_charset(&data.manifest, charset, manifest)
        .map_err(|e| Error::CharsetMismatch(format!("checkpoint charset does not cover the manifest: {e}")))?;
    let model = checkpoint.to_model::<f32>()?;
    evaluate(&model, charset, &data.samples)
}

fn augment_sample(sample: &ParagraphSample, cfg: &AugmentConfig, stats: &NormStats, rng: &mut ChaCha8Rng) -> ParagraphSample {
    let plan = AugmentationPlan::draw(cfg, rng);
    if plan.active().is_empty() {
        return sample.clone();
    }
    ParagraphSample { image: pad_to_reduction(&plan.apply(&sample.image, stats)), ..sample.clone() }
}

/// In-memory inputs of a run.
pub struct TrainData<'a> {
    pub train: &'a [ParagraphSample],
    pub val: &'a [ParagraphSample],
    pub charset: Charset,
    pub stats: NormStats,
}

pub struct TrainOutcome {
    pub last: Checkpoint,
    pub best: Checkpoint,
    pub best_val_cer: Option<f64>,
    pub log: Vec<LogRow>,
    pub steps: u64,
}

/// Builds the starting network of a run: fresh weights, or weights
/// transferred from `init`.
pub fn initial_model(cfg: &TrainRunConfig, charset: &Charset, init: Option<&Checkpoint>) -> Result<SpanModel<f32>> {
    let arch = cfg.regime.architecture();
    match init {
        None => SpanModel::new(arch, cfg.model_size.config(charset.len()), cfg.seed),
        Some(ckpt) => {
            if let Some(expected) = cfg.regime.init_architecture() {
                if ckpt.header.architecture != expected {
                    warn!(
                        "regime {} expects a {:?} checkpoint, got {:?}",
                        cfg.regime, expected, ckpt.header.architecture
                    );
                }
            }
            let mut model = SpanModel::new(arch, ckpt.header.config.clone(), cfg.seed)?;
            let report = crate::model::transfer_weights(ckpt, &mut model, charset, cfg.transfer)?;
            info!(
                "transferred {} parameters ({:.1}%), {} fresh",
                report.copied.len(),
                100.0 * report.copied_fraction(),
                report.fresh.len()
            );
            Ok(model)
        }
    }
}

/// Training loop over in-memory samples. When `out_dir` is set, the
/// metrics log and the best/last checkpoints are written there.
pub fn run_training(
    cfg: &TrainRunConfig,
    data: TrainData<'_>,
    init: Option<&Checkpoint>,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let model = initial_model(cfg, &data.charset, init)?;
    let mut trainer = Trainer::new(model, data.charset.clone(), cfg.adam.clone(), cfg.dropout, cfg.seed)?;
    let mut log_file = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("metrics.csv");
            let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            writeln!(f, "{LOG_HEADER}").map_err(|e| Error::io(&path, e))?;
            Some((f, path))
        }
        None => None,
    };
    let meta = |step: u64, val_cer: Option<f64>| TrainingMeta {
        regime: cfg.regime.name().into(),
        step,
        learning_rate: cfg.adam.learning_rate,
        beta1: cfg.adam.beta1,
        beta2: cfg.adam.beta2,
        epsilon: cfg.adam.epsilon,
        seed: cfg.seed,
        val_cer,
    };
    let snapshot = |t: &Trainer, step: u64, val: Option<f64>| {
        Checkpoint::from_model(&t.model, &t.charset, Some(data.stats.clone()), Some(meta(step, val)))
    };
    let val: &[ParagraphSample] = match cfg.val_limit {
        Some(n) => &data.val[..n.min(data.val.len())],
        None => data.val,
    };

    // data order and augmentation use their own streams so that regimes
    // sharing a seed see the same batches
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut aug_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    aug_rng.set_stream(2);

    let start = Instant::now();
    let mut log = Vec::new();
    let mut best = snapshot(&trainer, 0, None)?;
    let mut best_val: Option<f64> = None;
    let mut step = 0u64;
    let batch_size = cfg.batch_size();
    'outer: while step < cfg.max_steps {
        for idx in epoch_batches(data.train.len(), batch_size, &mut order_rng) {
            if step >= cfg.max_steps {
                break 'outer;
            }
            if cfg.max_wall_time_s.is_some_and(|limit| start.elapsed().as_secs_f64() >= limit) {
                info!("wall-time budget reached after {step} steps");
                break 'outer;
            }
            let augmented: Vec<ParagraphSample>;
            let members: Vec<&ParagraphSample> = if cfg.augment {
                augmented = idx.iter().map(|&i| augment_sample(&data.train[i], &cfg.augmentation, &data.stats, &mut aug_rng)).collect();
                augmented.iter().collect()
            } else {
                idx.iter().map(|&i| &data.train[i]).collect()
            };
            let batch = make_batch(&members, &data.charset)?;
            let report = trainer.step(&batch)?;
            step += 1;
            let mut row = LogRow { step, ctc_loss: report.loss, val_cer: None, wall_time_s: start.elapsed().as_secs_f64() };
            let due = cfg.eval_every > 0 && step.is_multiple_of(cfg.eval_every);
            if !val.is_empty() && (due || step == cfg.max_steps) {
                let cer = evaluate(&trainer.model, &data.charset, val)?.cer;
                row.val_cer = Some(cer);
                row.wall_time_s = start.elapsed().as_secs_f64();
                info!("step {step}: loss {:.4}, val CER {:.4}", report.loss, cer);
                if best_val.is_none_or(|b| cer < b) {
                    best_val = Some(cer);
                    best = snapshot(&trainer, step, Some(cer))?;
                    if let Some(dir) = out_dir {
                        best.save(dir.join("best.ckpt"))?;
                    }
                }
                if cfg.target_cer.is_some_and(|t| cer <= t) {
                    info!("target CER reached after {step} steps");
                    if let Some((f, path)) = log_file.as_mut() {
                        writeln!(f, "{}", row.to_csv()).map_err(|e| Error::io(path.as_path(), e))?;
                    }
                    log.push(row);
                    break 'outer;
                }
            } else if step.is_multiple_of(10) {
                info!("step {step}: loss {:.4}", report.loss);
            }
            if let Some((f, path)) = log_file.as_mut() {
                writeln!(f, "{}", row.to_csv()).map_err(|e| Error::io(path.as_path(), e))?;
            }
            log.push(row);
        }
    }

    // a final validation when the loop stopped off-cadence
    if !val.is_empty() && log.last().is_some_and(|r| r.val_cer.is_none()) {
        let cer = evaluate(&trainer.model, &data.charset, val)?.cer;
        if let Some(last) = log.last_mut() {
            last.val_cer = Some(cer);
        }
        if best_val.is_none_or(|b| cer < b) {
            best_val = Some(cer);
            best = snapshot(&trainer, step, Some(cer))?;
        }
    }
    let last_val = log.last().and_then(|r| r.val_cer);
    let last = snapshot(&trainer, step, last_val)?;
    if best_val.is_none() {
        best = last.clone();
    }
    if let Some(dir) = out_dir {
        last.save(dir.join("last.ckpt"))?;
        best.save(dir.join("best.ckpt"))?;
    }
    Ok(TrainOutcome { last, best, best_val_cer: best_val, log, steps: step })
}

/// File-based training: loads the manifests and the optional
/// initialization checkpoint, then runs [`run_training`].
pub fn train(cfg: &TrainRunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let manifest = cfg.train_manifest.as_deref().ok_or_else(|| Error::Config("train_manifest is required".into()))?;
    let init = cfg.init.as_deref().map(Checkpoint::load).transpose()?;
    let train_set = Dataset::load(manifest, None, cfg.threads)?;
    let charset = match (&cfg.charset, &init) {
        (Some(symbols), _) => Charset::new(symbols.chars())?,
        (None, Some(ckpt)) => ckpt.header.charset.clone(),
        (None, None) => train_set.manifest.infer_charset()?,
    };
    if let Some(ckpt) = &init {
        if ckpt.header.charset != charset {
            return Err(Error::CharsetMismatch(format!(
                "initialization checkpoint charset {:?} differs from the run charset {:?}",
                ckpt.header.charset.symbols().iter().collect::<String>(),
                charset.symbols().iter().collect::<String>()
            )));
        }
    }
    validate_charset(&train_set.manifest, &charset, manifest)?;
    let val_set = match &cfg.val_manifest {
        Some(path) => {
            let set = Dataset::load(path, Some(&train_set.stats), cfg.threads)?;
            validate_charset(&set.manifest, &charset, path)?;
            Some(set)
        }
        None => None,
    };
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.toml");
        fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))?;
    }
    let data = TrainData {
        train: &train_set.samples,
        val: val_set.as_ref().map(|s| s.samples.as_slice()).unwrap_or(&[]),
        charset,
        stats: train_set.stats.clone(),
    };
    run_training(cfg, data, init.as_ref(), cfg.out_dir.as_deref())
}
