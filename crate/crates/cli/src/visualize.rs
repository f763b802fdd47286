use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use span_core::ctc::best_path_decode_rows;
use span_core::data::{load_image_input, NormStats, RawImage};
use span_core::model::Checkpoint;
use span_core::tensor::{argmax_first, NdArray};

pub const OVERLAY_ALPHA: f64 = 0.45;

/// Per-cell argmax class of a `[1, classes, rows, cols]` lattice.
fn cell_classes(grid: &NdArray<f32>) -> (usize, usize, Vec<usize>) {
    let (classes, rows, cols) = (grid.shape()[1], grid.shape()[2], grid.shape()[3]);
    let plane = rows * cols;
    let mut scores = vec![0f32; classes];
    let cells = (0..plane)
        .map(|cell| {
            for (k, s) in scores.iter_mut().enumerate() {
                *s = grid.data()[k * plane + cell];
            }
            argmax_first(&scores)
        })
        .collect();
    (rows, cols, cells)
}

/// RGBA image of the input extent: red at `OVERLAY_ALPHA` over non-blank
/// cells, fully transparent elsewhere.
fn overlay(height: usize, width: usize, rows: usize, cols: usize, cells: &[usize], blank: usize) -> RawImage {
    let (ch, cw) = (height / rows, width / cols);
    let alpha = (OVERLAY_ALPHA * 255.0).round() as u8;
    let mut img = RawImage::filled(height, width, 4, 0);
    for y in 0..height {
        for x in 0..width {
            if cells[(y / ch).min(rows - 1) * cols + (x / cw).min(cols - 1)] != blank {
                let i = (y * width + x) * 4;
                img.data[i..i + 4].copy_from_slice(&[255, 0, 0, alpha]);
            }
        }
    }
    img
}

/// The overlay alpha-blended onto the (denormalized) input.
fn composite(input: &NdArray<f32>, stats: &NormStats, layer: &RawImage) -> RawImage {
    let (h, w) = (input.shape()[1], input.shape()[2]);
    let mut img = RawImage::filled(h, w, 3, 0);
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let v = input.data()[(c * h + y) * w + x] as f64 * stats.std[c] + stats.mean[c];
                let o = (y * w + x) * 4;
                let a = layer.data[o + 3] as f64 / 255.0;
                let blended = (1.0 - a) * v.clamp(0.0, 255.0) + a * layer.data[o + c] as f64;
                img.data[(y * w + x) * 3 + c] = blended.round() as u8;
            }
        }
    }
    img
}

pub fn default_rows_path(out: &Path) -> PathBuf {
    out.with_extension("rows.txt")
}

pub fn cmd_visualize(ckpt_path: &Path, image: &Path, out: &Path, rows_path: Option<&Path>, composite_path: Option<&Path>) -> Result<()> {
    let ckpt = Checkpoint::load(ckpt_path).with_context(|| format!("loading {}", ckpt_path.display()))?;
    let stats = ckpt.header.normalization.clone().unwrap_or_else(NormStats::identity);
    let charset = &ckpt.header.charset;
    let input = load_image_input(image, &stats)?;
    let (h, w) = (input.shape()[1], input.shape()[2]);
    let model = ckpt.to_model::<f32>()?;
    let lattice = model.predict(&input.clone().reshape([1, 3, h, w])?)?;
    let grid = lattice.grid.value();
    let (rows, cols, cells) = cell_classes(grid);
    let layer = overlay(h, w, rows, cols, &cells, charset.blank_index());
    layer.save(out)?;
    if let Some(path) = composite_path {
        composite(&input, &stats, &layer).save(path)?;
    }
    let texts = best_path_decode_rows(lattice.flat.value().data(), rows, cols, charset);
    let mut listing = String::new();
    for (r, text) in texts.iter().enumerate().filter(|(_, t)| !t.is_empty()) {
        listing.push_str(&format!("{r}\t{text}\n"));
    }
    let rows_file = rows_path.map(Path::to_path_buf).unwrap_or_else(|| default_rows_path(out));
    fs::write(&rows_file, listing).with_context(|| format!("writing {}", rows_file.display()))?;
    info!("overlay {}x{} written to {}, rows to {}", h, w, out.display(), rows_file.display());
    println!("{}", out.display());
    Ok(())
}
