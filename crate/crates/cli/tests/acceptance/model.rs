use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use span_core::model::{parameter_census as census, Architecture, ForwardCtx, ModelConfig, SpanModel};
use span_core::tensor::ops::collapse_rows;
use span_core::tensor::{no_grad, NdArray, Tensor};

use crate::{ensure, Check};

fn shapes(model: &SpanModel<f32>, h: usize, w: usize) -> Result<[Vec<usize>; 3], String> {
    let _guard = no_grad();
    let params = model.params().bind(false);
    let x = Tensor::constant(NdArray::zeros([1, 3, h, w]));
    let err = |e: span_core::Error| e.to_string();
    let features = model.encode(&x, &params, &mut ForwardCtx::<ChaCha8Rng>::eval()).map_err(err)?;
    let grid = model.decode(&features, &params).map_err(err)?;
    let flat = collapse_rows(&grid).map_err(err)?;
    Ok([features.shape().to_vec(), grid.shape().to_vec(), flat.shape().to_vec()])
}

pub fn shape_contract() -> Check {
    let model = SpanModel::<f32>::new(Architecture::Span, ModelConfig::full(100), 0).map_err(|e| e.to_string())?;
    let [f, g, l] = shapes(&model, 480, 320)?;
    ensure!(f == [1, 512, 15, 40], "features {f:?}");
    ensure!(g == [1, 101, 15, 40], "grid {g:?}");
    ensure!(l == [1, 600, 101], "flat {l:?}");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let (rows, cols) = (rng.random_range(1..=6), rng.random_range(1..=24));
        let [f, g, l] = shapes(&model, 32 * rows, 8 * cols)?;
        ensure!(
            f == [1, 512, rows, cols] && g == [1, 101, rows, cols] && l == [1, rows * cols, 101],
            "{}x{}: features {f:?} grid {g:?} flat {l:?}",
            32 * rows,
            8 * cols
        );
    }
    Ok("480x320 -> features 1x512x15x40, grid 1x101x15x40, 600 frames; 50 random sizes hold".into())
}

/// Counts written per block type: three 3x3 convolutions with bias plus a
/// per-channel affine norm for each convolution block; depthwise 3x3
/// (no bias) followed by pointwise with bias, three times, plus a norm for
/// each separable block; a 5x5 decoder with bias.
fn closed_form(n: usize) -> usize {
    let cb = |cin: usize, c: usize| 9 * cin * c + 9 * c * c * 2 + 3 * c + 2 * c;
    let dscb = |c: usize| 3 * (9 * c + c * c + c) + 2 * c;
    let widths = [3, 32, 64, 128, 256, 512, 512];
    let encoder: usize = widths.windows(2).map(|w| cb(w[0], w[1])).sum();
    encoder + 4 * dscb(512) + 25 * 512 * (n + 1) + (n + 1)
}

pub fn parameter_census() -> Check {
    let config = ModelConfig::full(100);
    let model = SpanModel::<f32>::new(Architecture::Span, config.clone(), 0).map_err(|e| e.to_string())?;
    let counted = model.param_count();
    let expected = closed_form(100);
    ensure!(counted == expected, "model holds {counted}, closed form {expected}");
    ensure!(census(&config) == counted, "library census {} vs {counted}", census(&config));
    let ratio = counted as f64 / 19.2e6;
    ensure!((0.85..=1.15).contains(&ratio), "{counted} is {:.1}% of 19.2M", 100.0 * ratio);
    Ok(format!("{counted} parameters ({:+.1}% vs 19.2M), equal to the closed form", 100.0 * (ratio - 1.0)))
}
