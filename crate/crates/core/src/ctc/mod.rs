//! Connectionist temporal classification: charset, loss and best-path
//! decoding.

mod charset;
mod decode;
mod loss;

pub use charset::Charset;
pub use decode::{best_path, best_path_decode_rows, best_path_decode_sequence, collapse_alignment};
pub use loss::{ctc_log_likelihood, ctc_loss, ctc_loss_batch, extend_with_blanks, min_frames, BatchCtcLoss, CtcOutcome};
