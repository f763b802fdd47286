//! Central finite-difference verification of analytic gradients (64-bit).

use crate::error::Result;
use crate::tensor::{no_grad, NdArray, Tensor};

/// Relative discrepancy with a small floor so that vanishing gradients are
/// compared on an absolute scale.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

#[derive(Debug, Clone)]
pub struct CoordinateCheck {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checks: Vec<CoordinateCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.checks.iter().map(|c| c.rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&CoordinateCheck> {
        self.checks.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// Compares the gradient of the scalar `f(inputs)` against central
/// differences with step `eps`. `select(input_index, len)` returns the
/// coordinates to probe for each input.
pub fn check_gradients<F, S>(inputs: &[NdArray<f64>], eps: f64, f: F, mut select: S) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
    S: FnMut(usize, usize) -> Vec<usize>,
{
    let vars: Vec<Tensor<f64>> = inputs.iter().cloned().map(Tensor::variable).collect();
    let loss = f(&vars)?;
    loss.backward()?;
    let analytic: Vec<NdArray<f64>> = vars
        .iter()
        .map(|v| v.grad().map(|g| g.clone()).unwrap_or_else(|| NdArray::zeros(v.shape().to_vec())))
        .collect();
    drop(loss);

    let _guard = no_grad();
    let eval = |which: usize, idx: usize, delta: f64| -> Result<f64> {
        let probe: Vec<Tensor<f64>> = inputs
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let mut a = a.clone();
                if i == which {
                    a.data_mut()[idx] += delta;
                }
                Tensor::constant(a)
            })
            .collect();
        Ok(f(&probe)?.value().item())
    };

    let mut report = GradCheckReport::default();
    for (which, input) in inputs.iter().enumerate() {
        for idx in select(which, input.len()) {
            let numeric = (eval(which, idx, eps)? - eval(which, idx, -eps)?) / (2.0 * eps);
            let a = analytic[which].data()[idx];
            report.checks.push(CoordinateCheck {
                input: which,
                index: idx,
                analytic: a,
                numeric,
                rel_error: relative_error(a, numeric),
            });
        }
    }
    Ok(report)
}

/// Probe every coordinate.
pub fn all_coordinates(_: usize, len: usize) -> Vec<usize> {
    (0..len).collect()
}
