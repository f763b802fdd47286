//! CTC negative log-likelihood by forward-backward recursion in log space.

use log::warn;

use crate::error::{Error, Result};
use crate::tensor::{Element, NdArray, Tensor};

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Blank-interleaved label `[blank, l1, blank, l2, …, blank]` of length `2L + 1`.
pub fn extend_with_blanks(label: &[usize], blank: usize) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * label.len() + 1);
    ext.push(blank);
    for &l in label {
        ext.push(l);
        ext.push(blank);
    }
    ext
}

/// Minimum number of frames an alignment of `label` needs: one per symbol
/// plus a separating blank between equal neighbours.
pub fn min_frames(label: &[usize]) -> usize {
    label.len() + label.windows(2).filter(|w| w[0] == w[1]).count()
}

#[derive(Debug, Clone, PartialEq)]
pub enum CtcOutcome {
    /// `loss = −ln P(label | log_probs)` and `d loss / d log_probs` (`T × C`).
    Finite { loss: f64, grad: Vec<f64> },
    /// No alignment fits in the available frames.
    Infeasible { required: usize, available: usize },
}

fn validate(log_probs: &[f64], frames: usize, classes: usize, label: &[usize], blank: usize) -> Result<()> {
    if log_probs.len() < frames * classes {
        return Err(Error::shape("ctc_loss", format!("{} values for {frames}x{classes}", log_probs.len())));
    }
    if blank >= classes {
        return Err(Error::InvalidArgument(format!("blank {blank} outside {classes} classes")));
    }
    if let Some(&bad) = label.iter().find(|&&l| l >= classes || l == blank) {
        return Err(Error::InvalidArgument(format!("label index {bad} is blank or out of range")));
    }
    if frames == 0 {
        return Err(Error::InvalidArgument("ctc needs at least one frame".into()));
    }
    Ok(())
}

/// `log α` over `frames × (2L+1)`, emissions included.
fn forward(log_probs: &[f64], frames: usize, classes: usize, ext: &[usize], blank: usize) -> Vec<f64> {
    let s_len = ext.len();
    let mut alpha = vec![f64::NEG_INFINITY; frames * s_len];
    alpha[0] = log_probs[ext[0]];
    if s_len > 1 {
        alpha[1] = log_probs[ext[1]];
    }
    for t in 1..frames {
        let (prev, cur) = alpha.split_at_mut(t * s_len);
        let prev = &prev[(t - 1) * s_len..];
        let emit = &log_probs[t * classes..(t + 1) * classes];
        for s in 0..s_len {
            let mut acc = prev[s];
            if s >= 1 {
                acc = log_add(acc, prev[s - 1]);
            }
            if s >= 2 && ext[s] != blank && ext[s] != ext[s - 2] {
                acc = log_add(acc, prev[s - 2]);
            }
            cur[s] = if acc == f64::NEG_INFINITY { acc } else { acc + emit[ext[s]] };
        }
    }
    alpha
}

/// `log β` over `frames × (2L+1)`, emission at `t` excluded.
fn backward(log_probs: &[f64], frames: usize, classes: usize, ext: &[usize], blank: usize) -> Vec<f64> {
    let s_len = ext.len();
    let mut beta = vec![f64::NEG_INFINITY; frames * s_len];
    let last = (frames - 1) * s_len;
    beta[last + s_len - 1] = 0.0;
    if s_len > 1 {
        beta[last + s_len - 2] = 0.0;
    }
    for t in (0..frames - 1).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * s_len);
        let cur = &mut cur[t * s_len..];
        let next = &next[..s_len];
        let emit = &log_probs[(t + 1) * classes..(t + 2) * classes];
        for s in 0..s_len {
            let mut acc = next[s] + emit[ext[s]];
            if s + 1 < s_len {
                acc = log_add(acc, next[s + 1] + emit[ext[s + 1]]);
            }
            if s + 2 < s_len && ext[s + 2] != blank && ext[s + 2] != ext[s] {
                acc = log_add(acc, next[s + 2] + emit[ext[s + 2]]);
            }
            cur[s] = acc;
        }
    }
    beta
}

/// `ln P(label | log_probs)` summed over every alignment; `-inf` when
/// infeasible.
pub fn ctc_log_likelihood(log_probs: &[f64], frames: usize, classes: usize, label: &[usize], blank: usize) -> Result<f64> {
    validate(log_probs, frames, classes, label, blank)?;
    let ext = extend_with_blanks(label, blank);
    let alpha = forward(log_probs, frames, classes, &ext, blank);
    let s_len = ext.len();
    let row = &alpha[(frames - 1) * s_len..];
    let mut ll = row[s_len - 1];
    if s_len > 1 {
        ll = log_add(ll, row[s_len - 2]);
    }
    Ok(ll)
}

/// Loss and its gradient with respect to the per-frame log-probabilities
/// (row-major `frames × classes`).
pub fn ctc_loss(log_probs: &[f64], frames: usize, classes: usize, label: &[usize], blank: usize) -> Result<CtcOutcome> {
    validate(log_probs, frames, classes, label, blank)?;
    let required = min_frames(label);
    if required > frames {
        return Ok(CtcOutcome::Infeasible { required, available: frames });
    }
    let ext = extend_with_blanks(label, blank);
    let s_len = ext.len();
    let alpha = forward(log_probs, frames, classes, &ext, blank);
    let beta = backward(log_probs, frames, classes, &ext, blank);
    let row = &alpha[(frames - 1) * s_len..];
    let mut ll = row[s_len - 1];
    if s_len > 1 {
        ll = log_add(ll, row[s_len - 2]);
    }
    if !ll.is_finite() {
        return Ok(CtcOutcome::Infeasible { required, available: frames });
    }

    // d(−ln P)/d lp[t,k] = −Σ_{s: ext[s]=k} α_t(s) β_t(s) / P
    let mut grad = vec![0.0; frames * classes];
    let mut occupancy = vec![f64::NEG_INFINITY; classes];
    for t in 0..frames {
        occupancy.fill(f64::NEG_INFINITY);
        for s in 0..s_len {
            let v = alpha[t * s_len + s] + beta[t * s_len + s];
            occupancy[ext[s]] = log_add(occupancy[ext[s]], v);
        }
        for (k, &occ) in occupancy.iter().enumerate() {
            if occ != f64::NEG_INFINITY {
                grad[t * classes + k] = -(occ - ll).exp();
            }
        }
    }
    Ok(CtcOutcome::Finite { loss: -ll, grad })
}

/// Mean CTC loss of a batch and the indices of skipped samples.
pub struct BatchCtcLoss<E: Element> {
    pub loss: Tensor<E>,
    pub per_sample: Vec<Option<f64>>,
    pub skipped: Vec<usize>,
}

/// Batched loss over `log_probs` of shape `[n, T, C]` (typically the output
/// of `log_softmax_lastdim`). Sample `i` uses its first `input_lengths[i]`
/// frames. Infeasible samples are skipped with a warning; the loss is the
/// mean over the remaining ones.
pub fn ctc_loss_batch<E: Element>(
    log_probs: &Tensor<E>,
    labels: &[Vec<usize>],
    input_lengths: &[usize],
    blank: usize,
) -> Result<BatchCtcLoss<E>> {
    let (n, frames, classes) = match log_probs.shape() {
        &[n, t, c] => (n, t, c),
        other => return Err(Error::shape("ctc_loss_batch", format!("expected [n, T, C], got {other:?}"))),
    };
    if labels.len() != n || input_lengths.len() != n {
        return Err(Error::shape(
            "ctc_loss_batch",
            format!("{n} samples but {} labels and {} lengths", labels.len(), input_lengths.len()),
        ));
    }
    let data = log_probs.value().data();
    let mut total = 0.0;
    let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    let mut per_sample = Vec::with_capacity(n);
    let mut skipped = Vec::new();
    for i in 0..n {
        let len = input_lengths[i];
        if len > frames {
            return Err(Error::shape("ctc_loss_batch", format!("input length {len} > {frames}")));
        }
        let lp: Vec<f64> = data[i * frames * classes..(i * frames + len) * classes].iter().map(|v| v.as_f64()).collect();
        match ctc_loss(&lp, len, classes, &labels[i], blank)? {
            CtcOutcome::Finite { loss, grad } => {
                total += loss;
                per_sample.push(Some(loss));
                grads.push(Some(grad));
            }
            CtcOutcome::Infeasible { required, available } => {
                warn!("skipping sample {i}: label needs {required} frames, only {available} available");
                per_sample.push(None);
                grads.push(None);
                skipped.push(i);
            }
        }
    }
    let kept = n - skipped.len();
    if kept == 0 {
        return Ok(BatchCtcLoss { loss: Tensor::constant(NdArray::scalar(E::zero())), per_sample, skipped });
    }
    let mean = total / kept as f64;
    let loss = Tensor::from_op(
        NdArray::scalar(E::from_f64_lossy(mean)),
        &[log_probs],
        Box::new(move |g, _, _| {
            let scale = g.item().as_f64() / kept as f64;
            let mut dx = NdArray::zeros([n, frames, classes]);
            for (i, grad) in grads.iter().enumerate() {
                if let Some(grad) = grad {
                    let dst = &mut dx.data_mut()[i * frames * classes..];
                    for (d, &v) in dst.iter_mut().zip(grad) {
                        *d = E::from_f64_lossy(v * scale);
                    }
                }
            }
            vec![Some(dx)]
        }),
    );
    Ok(BatchCtcLoss { loss, per_sample, skipped })
}
