//! Raw image → normalized network input.
//!
//! Images are halved with bilinear interpolation, gray images are repeated
//! over three channels, each channel is standardized with dataset-level
//! statistics, and the result is padded at the bottom/right to multiples of
//! 32 × 8 with the normalized value 0 (the dataset mean).

use serde::{Deserialize, Serialize};

use crate::data::image::RawImage;
use crate::error::{Error, Result};
use crate::model::REDUCTION;
use crate::tensor::NdArray;

/// Smallest raw image accepted (height, width): the halved image must still
/// cover one lattice cell.
pub const MIN_RAW_EXTENT: (usize, usize) = (64, 16);

/// Per-channel mean and standard deviation on the 0–255 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl NormStats {
    pub fn identity() -> Self {
        Self { mean: [0.0; 3], std: [1.0; 3] }
    }

    /// Statistics over the downscaled RGB planes of a training split.
    pub fn from_planes<'a>(planes: impl IntoIterator<Item = &'a NdArray<f32>>) -> Self {
        let mut sum = [0f64; 3];
        let mut sq = [0f64; 3];
        let mut count = 0f64;
        for p in planes {
            let [_, h, w] = [p.shape()[0], p.shape()[1], p.shape()[2]];
            let plane = h * w;
            for c in 0..3 {
                for &v in &p.data()[c * plane..(c + 1) * plane] {
                    let v = v as f64;
                    sum[c] += v;
                    sq[c] += v * v;
                }
            }
            count += plane as f64;
        }
        if count == 0.0 {
            return Self { mean: [0.0; 3], std: [1.0; 3] };
        }
        let mut mean = [0.0; 3];
        let mut std = [1.0; 3];
        for c in 0..3 {
            mean[c] = sum[c] / count;
            let var = (sq[c] / count - mean[c] * mean[c]).max(0.0);
            // constant data keeps unit scale so values stay finite
            std[c] = if var.sqrt() > 1e-6 { var.sqrt() } else { 1.0 };
        }
        Self { mean, std }
    }
}

/// Bilinear resampling of `[c, h, w]` planes with half-pixel centers.
pub fn resize_bilinear(src: &NdArray<f32>, out_h: usize, out_w: usize) -> NdArray<f32> {
    let (c, h, w) = (src.shape()[0], src.shape()[1], src.shape()[2]);
    let mut out = NdArray::zeros([c, out_h, out_w]);
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let coord = |o: usize, scale: f64, n: usize| -> (usize, usize, f32) {
        let f = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = f.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, (f - i0 as f64) as f32)
    };
    let xs: Vec<_> = (0..out_w).map(|x| coord(x, sx, w)).collect();
    for ch in 0..c {
        let plane = &src.data()[ch * h * w..(ch + 1) * h * w];
        for y in 0..out_h {
            let (y0, y1, fy) = coord(y, sy, h);
            for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.data_mut()[(ch * out_h + y) * out_w + x] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    out
}

/// Halved, three-channel planes `[3, h/2, w/2]` on the 0–255 scale.
pub fn downscale_to_rgb(raw: &RawImage) -> Result<NdArray<f32>> {
    if raw.height < MIN_RAW_EXTENT.0 || raw.width < MIN_RAW_EXTENT.1 {
        return Err(Error::InvalidArgument(format!(
            "image {}x{} is smaller than the {}x{} minimum",
            raw.height, raw.width, MIN_RAW_EXTENT.0, MIN_RAW_EXTENT.1
        )));
    }
    if raw.channels != 1 && raw.channels != 3 {
        return Err(Error::InvalidArgument(format!("{} channels unsupported", raw.channels)));
    }
    let (h, w) = (raw.height, raw.width);
    let mut planes = NdArray::zeros([raw.channels, h, w]);
    for y in 0..h {
        for x in 0..w {
            for c in 0..raw.channels {
                planes.data_mut()[(c * h + y) * w + x] = raw.get(y, x, c) as f32;
            }
        }
    }
    let half = resize_bilinear(&planes, h / 2, w / 2);
    if raw.channels == 3 {
        return Ok(half);
    }
    let plane = half.data().to_vec();
    let mut rgb = Vec::with_capacity(plane.len() * 3);
    for _ in 0..3 {
        rgb.extend_from_slice(&plane);
    }
    NdArray::from_vec([3, h / 2, w / 2], rgb)
}

pub fn normalize(planes: &mut NdArray<f32>, stats: &NormStats) {
    let plane = planes.shape()[1] * planes.shape()[2];
    for c in 0..3 {
        let (m, s) = (stats.mean[c] as f32, stats.std[c] as f32);
        for v in &mut planes.data_mut()[c * plane..(c + 1) * plane] {
            *v = (*v - m) / s;
        }
    }
}

pub fn round_up(value: usize, multiple: usize) -> usize {
    value.div_ceil(multiple).max(1) * multiple
}

/// Pads `[c, h, w]` at the bottom and right to the given extents.
pub fn pad_to(planes: &NdArray<f32>, out_h: usize, out_w: usize, value: f32) -> NdArray<f32> {
    let (c, h, w) = (planes.shape()[0], planes.shape()[1], planes.shape()[2]);
    assert!(out_h >= h && out_w >= w, "padding cannot shrink");
    if (out_h, out_w) == (h, w) {
        return planes.clone();
    }
    let mut out = NdArray::full([c, out_h, out_w], value);
    for ch in 0..c {
        for y in 0..h {
            let src = &planes.data()[(ch * h + y) * w..(ch * h + y + 1) * w];
            out.data_mut()[(ch * out_h + y) * out_w..(ch * out_h + y) * out_w + w].copy_from_slice(src);
        }
    }
    out
}

/// Pads to the next multiples of the encoder reduction (32 × 8).
pub fn pad_to_reduction(planes: &NdArray<f32>) -> NdArray<f32> {
    let (h, w) = (planes.shape()[1], planes.shape()[2]);
    pad_to(planes, round_up(h, REDUCTION.0), round_up(w, REDUCTION.1), 0.0)
}

/// Full preprocessing of one raw image into a `[3, H, W]` network input.
pub fn preprocess(raw: &RawImage, stats: &NormStats) -> Result<NdArray<f32>> {
    let mut planes = downscale_to_rgb(raw)?;
    normalize(&mut planes, stats);
    Ok(pad_to_reduction(&planes))
}
