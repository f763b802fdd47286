//! Manifests, preprocessing, augmentation, batching and the synthetic page
//! generator.

pub mod augment;
mod batch;
pub mod font;
mod image;
pub mod manifest;
pub mod preprocess;
pub mod synthetic;

use std::path::Path;

pub use augment::{AugmentConfig, AugmentationPlan, Technique, Warp};
pub use batch::{epoch_batches, make_batch, Batch, ParagraphSample};
pub use image::RawImage;
pub use manifest::{load_manifest, validate_charset, write_manifest, Manifest, ManifestRecord};
pub use preprocess::{pad_to_reduction, preprocess, NormStats, MIN_RAW_EXTENT};
pub use synthetic::{
    generate_pages, generate_synthetic, load_layouts, render_page, LayoutEntry, LineBox, PageLayout, SyntheticPage, SyntheticSpec,
};

use crate::error::Result;
use crate::tensor::NdArray;

/// Maps `f` over `items` on up to `threads` scoped workers, keeping order.
pub fn parallel_map<T: Sync, U: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    let threads = threads.max(1).min(items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items.chunks(chunk).map(|part| scope.spawn(|| part.iter().map(&f).collect::<Vec<_>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// A manifest loaded into memory as normalized, padded samples.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub samples: Vec<ParagraphSample>,
    pub stats: NormStats,
}

impl Dataset {
    /// Loads every image of the manifest. Normalization statistics are
    /// computed from this split unless `stats` is given (for evaluation
    /// splits and checkpoint-bound inference).
    pub fn load(manifest_path: impl AsRef<Path>, stats: Option<&NormStats>, threads: usize) -> Result<Self> {
        let manifest = load_manifest(manifest_path)?;
        let planes: Vec<NdArray<f32>> = parallel_map(&manifest.records, threads, |r| {
            let raw = RawImage::load(manifest.resolve(r))?;
            preprocess::downscale_to_rgb(&raw).map_err(|e| match e {
                crate::Error::InvalidArgument(reason) => crate::Error::Image { path: manifest.resolve(r), reason },
                other => other,
            })
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let stats = match stats {
            Some(s) => s.clone(),
            None => NormStats::from_planes(&planes),
        };
        let samples = planes
            .into_iter()
            .zip(&manifest.records)
            .map(|(mut p, r)| {
                preprocess::normalize(&mut p, &stats);
                ParagraphSample {
                    image: pad_to_reduction(&p),
                    transcription: r.transcription.clone(),
                    source_id: r.image.to_string_lossy().into_owned(),
                }
            })
            .collect();
        Ok(Self { manifest, samples, stats })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Raw image file → network input under frozen statistics.
pub fn load_image_input(path: impl AsRef<Path>, stats: &NormStats) -> Result<NdArray<f32>> {
    let raw = RawImage::load(path.as_ref())?;
    preprocess(&raw, stats).map_err(|e| match e {
        crate::Error::InvalidArgument(reason) => crate::Error::Image { path: path.as_ref().to_path_buf(), reason },
        other => other,
    })
}
