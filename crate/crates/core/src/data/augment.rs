//! Training-time augmentation.
//!
//! Nine techniques run in a fixed order, each drawn independently with the
//! configured probability (0.2 by default): resolution change, one of the
//! geometric warps {perspective, elastic, projective}, dilation, erosion,
//! brightness, contrast and sign flip. The three warps share a single
//! uniform draw so at most one of them is active.
//!
//! Everything operates on normalized, unpadded `[3, h, w]` planes at model
//! resolution. Values revealed by a warp are filled with 0, the normalized
//! background. Dilation and erosion are 3×3 max and min filters on values.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::preprocess::{resize_bilinear, NormStats};
use crate::tensor::NdArray;

/// Smallest planes the resolution change may produce (one lattice cell).
const MIN_EXTENT: (usize, usize) = (32, 8);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub probability: f64,
    pub resolution_range: (f64, f64),
    /// Largest corner displacement of the perspective warp, as a fraction
    /// of the image side.
    pub perspective_max_shift: f64,
    pub elastic_alpha: (f64, f64),
    pub elastic_sigma: (f64, f64),
    pub projective_max_rotation_deg: f64,
    pub projective_max_shear: f64,
    pub projective_scale: (f64, f64),
    /// Weight of the projective row of the random homography.
    pub projective_max_tilt: f64,
    pub brightness_range: (f64, f64),
    pub contrast_range: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            probability: 0.2,
            resolution_range: (0.75, 1.25),
            perspective_max_shift: 0.06,
            elastic_alpha: (0.0, 8.0),
            elastic_sigma: (4.0, 10.0),
            projective_max_rotation_deg: 2.0,
            projective_max_shear: 0.05,
            projective_scale: (0.9, 1.1),
            projective_max_tilt: 1e-4,
            brightness_range: (0.8, 1.2),
            contrast_range: (0.8, 1.2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Technique {
    Resolution,
    Perspective,
    Elastic,
    Projective,
    Dilation,
    Erosion,
    Brightness,
    Contrast,
    SignFlip,
}

impl Technique {
    pub const ALL: [Technique; 9] = [
        Technique::Resolution,
        Technique::Perspective,
        Technique::Elastic,
        Technique::Projective,
        Technique::Dilation,
        Technique::Erosion,
        Technique::Brightness,
        Technique::Contrast,
        Technique::SignFlip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Technique::Resolution => "resolution",
            Technique::Perspective => "perspective",
            Technique::Elastic => "elastic",
            Technique::Projective => "projective",
            Technique::Dilation => "dilation",
            Technique::Erosion => "erosion",
            Technique::Brightness => "brightness",
            Technique::Contrast => "contrast",
            Technique::SignFlip => "sign-flip",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Warp {
    /// Offsets of the four corners (tl, tr, br, bl) as fractions of the
    /// image extents, `(dx, dy)` each.
    Perspective([(f64, f64); 4]),
    Elastic { alpha: f64, sigma: f64, seed: u64 },
    Projective { rotation_deg: f64, shear: f64, scale: f64, tilt: (f64, f64) },
}

impl Warp {
    pub fn technique(&self) -> Technique {
        match self {
            Warp::Perspective(_) => Technique::Perspective,
            Warp::Elastic { .. } => Technique::Elastic,
            Warp::Projective { .. } => Technique::Projective,
        }
    }
}

/// Which techniques fire for one sample, with their drawn parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AugmentationPlan {
    pub resolution: Option<f64>,
    pub warp: Option<Warp>,
    pub dilation: bool,
    pub erosion: bool,
    pub brightness: Option<f64>,
    pub contrast: Option<f64>,
    pub sign_flip: bool,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

impl AugmentationPlan {
    pub fn draw<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> Self {
        let p = cfg.probability.clamp(0.0, 1.0 / 3.0);
        let fires = |rng: &mut R| rng.random::<f64>() < cfg.probability;
        let mut plan = AugmentationPlan::default();
        if fires(rng) {
            plan.resolution = Some(uniform(rng, cfg.resolution_range));
        }
        let u: f64 = rng.random();
        plan.warp = if u < p {
            let m = cfg.perspective_max_shift.abs();
            let mut corner = || (uniform(rng, (-m, m)), uniform(rng, (-m, m)));
            Some(Warp::Perspective([corner(), corner(), corner(), corner()]))
        } else if u < 2.0 * p {
            Some(Warp::Elastic {
                alpha: uniform(rng, cfg.elastic_alpha),
                sigma: uniform(rng, cfg.elastic_sigma),
                seed: rng.random(),
            })
        } else if u < 3.0 * p {
            let r = cfg.projective_max_rotation_deg.abs();
            let s = cfg.projective_max_shear.abs();
            let t = cfg.projective_max_tilt.abs();
            Some(Warp::Projective {
                rotation_deg: uniform(rng, (-r, r)),
                shear: uniform(rng, (-s, s)),
                scale: uniform(rng, cfg.projective_scale),
                tilt: (uniform(rng, (-t, t)), uniform(rng, (-t, t))),
            })
        } else {
            None
        };
        plan.dilation = fires(rng);
        plan.erosion = fires(rng);
        if fires(rng) {
            plan.brightness = Some(uniform(rng, cfg.brightness_range));
        }
        if fires(rng) {
            plan.contrast = Some(uniform(rng, cfg.contrast_range));
        }
        plan.sign_flip = fires(rng);
        plan
    }

    pub fn is_active(&self, t: Technique) -> bool {
        match t {
            Technique::Resolution => self.resolution.is_some(),
            Technique::Perspective | Technique::Elastic | Technique::Projective => {
                self.warp.as_ref().is_some_and(|w| w.technique() == t)
            }
            Technique::Dilation => self.dilation,
            Technique::Erosion => self.erosion,
            Technique::Brightness => self.brightness.is_some(),
            Technique::Contrast => self.contrast.is_some(),
            Technique::SignFlip => self.sign_flip,
        }
    }

    pub fn active(&self) -> Vec<Technique> {
        Technique::ALL.into_iter().filter(|&t| self.is_active(t)).collect()
    }

    /// Applies the plan to normalized `[3, h, w]` planes.
    pub fn apply(&self, planes: &NdArray<f32>, stats: &NormStats) -> NdArray<f32> {
        let mut out = planes.clone();
        if let Some(f) = self.resolution {
            let (h, w) = (out.shape()[1], out.shape()[2]);
            let nh = ((h as f64 * f).round() as usize).max(MIN_EXTENT.0);
            let nw = ((w as f64 * f).round() as usize).max(MIN_EXTENT.1);
            out = resize_bilinear(&out, nh, nw);
        }
        match &self.warp {
            Some(Warp::Perspective(offsets)) => {
                let (h, w) = (out.shape()[1] as f64, out.shape()[2] as f64);
                let dst = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
                let mut src = dst;
                for (s, (dx, dy)) in src.iter_mut().zip(offsets) {
                    s.0 += dx * w;
                    s.1 += dy * h;
                }
                if let Some(hm) = homography(&dst, &src) {
                    out = warp_homography(&out, &hm);
                }
            }
            Some(Warp::Elastic { alpha, sigma, seed }) => out = elastic(&out, *alpha, *sigma, *seed),
            Some(Warp::Projective { rotation_deg, shear, scale, tilt }) => {
                let hm = projective_matrix(out.shape()[1], out.shape()[2], *rotation_deg, *shear, *scale, *tilt);
                out = warp_homography(&out, &hm);
            }
            None => {}
        }
        if self.dilation {
            out = morphology(&out, f32::max);
        }
        if self.erosion {
            out = morphology(&out, f32::min);
        }
        if let Some(b) = self.brightness {
            map_pixels(&mut out, stats, |p, _| p * b);
        }
        if let Some(c) = self.contrast {
            map_pixels(&mut out, stats, |p, mean| mean + (p - mean) * c);
        }
        if self.sign_flip {
            for v in out.data_mut() {
                *v = -*v;
            }
        }
        out
    }
}

// Applies `f(pixel, channel_mean)` to pixel values recovered from normalized
// ones, clamped to the 8-bit range.
fn map_pixels(planes: &mut NdArray<f32>, stats: &NormStats, f: impl Fn(f64, f64) -> f64) {
    let plane = planes.shape()[1] * planes.shape()[2];
    for c in 0..3 {
        let (m, s) = (stats.mean[c], stats.std[c]);
        for v in &mut planes.data_mut()[c * plane..(c + 1) * plane] {
            let p = f(*v as f64 * s + m, m).clamp(0.0, 255.0);
            *v = ((p - m) / s) as f32;
        }
    }
}

fn morphology(planes: &NdArray<f32>, pick: fn(f32, f32) -> f32) -> NdArray<f32> {
    let (c, h, w) = (planes.shape()[0], planes.shape()[1], planes.shape()[2]);
    let mut out = planes.clone();
    let src = planes.data();
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..h {
            for x in 0..w {
                let mut acc = src[base + y * w + x];
                for yy in y.saturating_sub(1)..(y + 2).min(h) {
                    for xx in x.saturating_sub(1)..(x + 2).min(w) {
                        acc = pick(acc, src[base + yy * w + xx]);
                    }
                }
                out.data_mut()[base + y * w + x] = acc;
            }
        }
    }
    out
}

fn sample_bilinear(plane: &[f32], h: usize, w: usize, x: f64, y: f64) -> f32 {
    // pixel centers at integer coordinates; outside reads as 0
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = (x - x0) as f32;
    let fy = (y - y0) as f32;
    let at = |yy: f64, xx: f64| -> f32 {
        if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
            0.0
        } else {
            plane[yy as usize * w + xx as usize]
        }
    };
    let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1.0) * fx;
    let bottom = at(y0 + 1.0, x0) * (1.0 - fx) + at(y0 + 1.0, x0 + 1.0) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Row-major 3×3 homography mapping `from[i]` to `to[i]`, `h22 = 1`.
pub fn homography(from: &[(f64, f64); 4], to: &[(f64, f64); 4]) -> Option<[f64; 9]> {
    let mut a = [[0.0f64; 9]; 8];
    for i in 0..4 {
        let (x, y) = from[i];
        let (u, v) = to[i];
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
    }
    for col in 0..8 {
        let pivot = (col..8).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..8 {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..9 {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut h = [1.0; 9];
    for i in 0..8 {
        h[i] = a[i][8] / a[i][i];
    }
    Some(h)
}

fn apply_h(h: &[f64; 9], x: f64, y: f64) -> (f64, f64) {
    let d = h[6] * x + h[7] * y + h[8];
    ((h[0] * x + h[1] * y + h[2]) / d, (h[3] * x + h[4] * y + h[5]) / d)
}

/// Resamples with `out(p) = in(h(p))`, `h` mapping output to input
/// coordinates in pixel-edge units.
fn warp_homography(planes: &NdArray<f32>, h: &[f64; 9]) -> NdArray<f32> {
    let (c, ht, wd) = (planes.shape()[0], planes.shape()[1], planes.shape()[2]);
    let mut out = NdArray::zeros([c, ht, wd]);
    for y in 0..ht {
        for x in 0..wd {
            let (sx, sy) = apply_h(h, x as f64 + 0.5, y as f64 + 0.5);
            if !(sx.is_finite() && sy.is_finite()) {
                continue;
            }
            for ch in 0..c {
                let plane = &planes.data()[ch * ht * wd..(ch + 1) * ht * wd];
                out.data_mut()[(ch * ht + y) * wd + x] = sample_bilinear(plane, ht, wd, sx - 0.5, sy - 0.5);
            }
        }
    }
    out
}

fn projective_matrix(h: usize, w: usize, rotation_deg: f64, shear: f64, scale: f64, tilt: (f64, f64)) -> [f64; 9] {
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (s, c) = rotation_deg.to_radians().sin_cos();
    // centered similarity + shear, then a small projective row
    let a = c / scale;
    let b = (-s + shear) / scale;
    let d = s / scale;
    let e = c / scale;
    [
        a,
        b,
        cx - a * cx - b * cy,
        d,
        e,
        cy - d * cx - e * cy,
        tilt.0,
        tilt.1,
        1.0 - tilt.0 * cx - tilt.1 * cy,
    ]
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

fn blur(field: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel.iter().enumerate().map(|(k, kv)| kv * field[y * w + clamp(x as isize + k as isize - r, w)]).sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel.iter().enumerate().map(|(k, kv)| kv * tmp[clamp(y as isize + k as isize - r, h) * w + x]).sum();
        }
    }
    out
}

fn elastic(planes: &NdArray<f32>, alpha: f64, sigma: f64, seed: u64) -> NdArray<f32> {
    use rand::SeedableRng;
    let (c, h, w) = (planes.shape()[0], planes.shape()[1], planes.shape()[2]);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let kernel = gaussian_kernel(sigma.max(0.5));
    let mut field = || {
        let raw: Vec<f64> = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let smooth = blur(&raw, h, w, &kernel);
        let peak = smooth.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if peak > 0.0 { alpha / peak } else { 0.0 };
        smooth.into_iter().map(|v| v * scale).collect::<Vec<_>>()
    };
    let dx = field();
    let dy = field();
    let mut out = NdArray::zeros([c, h, w]);
    for ch in 0..c {
        let plane = &planes.data()[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                out.data_mut()[ch * h * w + i] = sample_bilinear(plane, h, w, x as f64 + dx[i], y as f64 + dy[i]);
            }
        }
    }
    out
}
