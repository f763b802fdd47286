//! The recognizer network: convolution-block encoder, 5×5 prediction layer
//! and row-concatenation of the resulting 2D lattice.

mod blocks;
mod checkpoint;
mod config;
mod network;
mod params;
mod transfer;

pub use blocks::{build_cb, build_dscb, Block, BlockKind, DropoutKind, ForwardCtx};
pub use checkpoint::{Checkpoint, CheckpointHeader, TensorEntry, TrainingMeta, CHECKPOINT_MAGIC, FORMAT_VERSION};
pub use config::{vertical_receptive_field, Architecture, ModelConfig, CB_STRIDES, REDUCTION};
pub use network::{parameter_census, PredictionLattice, SpanModel};
pub use params::ParamStore;
pub use transfer::{transfer_weights, TransferMode, TransferReport};
