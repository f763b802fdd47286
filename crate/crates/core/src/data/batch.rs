use rand::seq::SliceRandom;
use rand::Rng;

use crate::ctc::Charset;
use crate::data::preprocess::pad_to;
use crate::error::{Error, Result};
use crate::tensor::NdArray;

/// One preprocessed paragraph (or line) with its line-break-free label.
#[derive(Debug, Clone, PartialEq)]
pub struct ParagraphSample {
    /// Normalized `[3, H, W]` planes, H and W multiples of 32 and 8.
    pub image: NdArray<f32>,
    pub transcription: String,
    pub source_id: String,
}

impl ParagraphSample {
    pub fn extent(&self) -> (usize, usize) {
        (self.image.shape()[1], self.image.shape()[2])
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    /// `[n, 3, H_max, W_max]`, padded with the normalized background 0.
    pub images: NdArray<f32>,
    pub labels: Vec<Vec<usize>>,
    pub transcriptions: Vec<String>,
    pub source_ids: Vec<String>,
    /// Per-sample extents before batch padding.
    pub extents: Vec<(usize, usize)>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Stacks samples into one padded batch and encodes their labels.
///
/// Every sample's CTC input length is the full flattened lattice of the
/// batch-padded grid; the padding is expected to be predicted as blank.
pub fn make_batch(samples: &[&ParagraphSample], charset: &Charset) -> Result<Batch> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("cannot build an empty batch".into()));
    }
    let h = samples.iter().map(|s| s.extent().0).max().unwrap_or(0);
    let w = samples.iter().map(|s| s.extent().1).max().unwrap_or(0);
    let per = 3 * h * w;
    let mut data = Vec::with_capacity(per * samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    for s in samples {
        if s.image.shape()[0] != 3 {
            return Err(Error::shape("make_batch", format!("expected 3 channels, got {:?}", s.image.shape())));
        }
        data.extend_from_slice(pad_to(&s.image, h, w, 0.0).data());
        labels.push(charset.encode(&s.transcription)?);
    }
    Ok(Batch {
        images: NdArray::from_vec([samples.len(), 3, h, w], data)?,
        labels,
        transcriptions: samples.iter().map(|s| s.transcription.clone()).collect(),
        source_ids: samples.iter().map(|s| s.source_id.clone()).collect(),
        extents: samples.iter().map(|s| s.extent()).collect(),
    })
}

/// Shuffled index chunks covering `0..count` once (one epoch).
pub fn epoch_batches<R: Rng + ?Sized>(count: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn sample(h: usize, w: usize, text: &str) -> ParagraphSample {
        ParagraphSample { image: NdArray::full([3, h, w], 1.0), transcription: text.into(), source_id: text.into() }
    }

    #[test]
    fn pads_to_batch_maximum() {
        let cs = Charset::from_texts(["ab c"]).unwrap();
        let (a, b) = (sample(64, 128, "ab"), sample(96, 160, "c a"));
        let batch = make_batch(&[&a, &b], &cs).unwrap();
        assert_eq!(batch.images.shape(), &[2, 3, 96, 160]);
        // padding of the first sample is background
        assert_eq!(batch.images.data()[70 * 160 + 3], 0.0);
        assert_eq!(batch.images.data()[3 * 96 * 160], 1.0);
        let decoded: Vec<String> = batch.labels.iter().map(|l| cs.decode(l)).collect();
        assert_eq!(decoded, vec!["ab", "c a"]);
        assert_eq!(batch.extents, vec![(64, 128), (96, 160)]);
    }

    #[test]
    fn single_sample_is_unpadded() {
        let cs = Charset::from_texts(["x"]).unwrap();
        let a = sample(32, 16, "x");
        let batch = make_batch(&[&a], &cs).unwrap();
        assert_eq!(batch.images.data(), a.image.data());
    }

    #[test]
    fn unknown_character_and_empty_batch_fail() {
        let cs = Charset::from_texts(["x"]).unwrap();
        assert!(make_batch(&[&sample(32, 8, "y")], &cs).is_err());
        assert!(make_batch(&[], &cs).is_err());
    }

    #[test]
    fn epoch_covers_every_index_once() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut all: Vec<usize> = epoch_batches(10, 4, &mut rng).concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }
}
