//! Segmentation-free paragraph recognition with a fully convolutional
//! network: a 2D character lattice is predicted from the image, its rows are
//! concatenated into one sequence, and the sequence is aligned to the
//! line-break-free transcription with CTC.

pub mod ctc;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Element, NdArray, Tensor};
