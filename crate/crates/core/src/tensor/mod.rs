//! Dense tensors, reverse-mode autodiff and the neural primitives the
//! recognizer is built from.

mod array;
mod autodiff;
mod element;
pub mod gradcheck;
pub mod ops;

pub use array::{argmax_first, NdArray};
pub use autodiff::{no_grad, NoGradGuard, Tensor};
pub use element::{gemm, Element, Layout};
