//! Optimization, the training regimes and evaluation.

mod adam;
mod regime;
mod run;

pub use adam::{Adam, AdamConfig, StepOutcome};
pub use regime::Regime;
pub use run::{
    evaluate, evaluate_checkpoint, initial_model, run_training, train, transcribe, LogRow, ModelSize, StepReport,
    TrainData, TrainOutcome, TrainRunConfig, Trainer, LOG_HEADER,
};
