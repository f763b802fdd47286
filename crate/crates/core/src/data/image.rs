use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage, RgbaImage};

use crate::error::{Error, Result};

/// 8-bit image in interleaved `height × width × channels` layout with one
/// (gray), three (RGB) or four (RGBA, writing only) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl RawImage {
    pub fn gray(height: usize, width: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), height * width);
        Self { height, width, channels: 1, data }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Self {
        Self { height, width, channels, data: vec![value; height * width * channels] }
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| Error::Image { path: path.to_path_buf(), reason: e.to_string() })?;
        Ok(Self::from_dynamic(img))
    }

    pub fn from_dynamic(img: DynamicImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img {
            DynamicImage::ImageLuma8(g) => Self { height: h, width: w, channels: 1, data: g.into_raw() },
            DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => {
                Self { height: h, width: w, channels: 1, data: img.to_luma8().into_raw() }
            }
            other => Self { height: h, width: w, channels: 3, data: other.to_rgb8().into_raw() },
        }
    }

    /// Writes PNG (or PGM when the extension is `.pgm`).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let err = |e: image::ImageError| Error::Image { path: path.to_path_buf(), reason: e.to_string() };
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some("pgm") => ImageFormat::Pnm,
            _ => ImageFormat::Png,
        };
        let (w, h) = (self.width as u32, self.height as u32);
        match self.channels {
            1 => GrayImage::from_raw(w, h, self.data.clone()).expect("buffer size").save_with_format(path, format).map_err(err),
            3 => RgbImage::from_raw(w, h, self.data.clone()).expect("buffer size").save_with_format(path, format).map_err(err),
            4 => RgbaImage::from_raw(w, h, self.data.clone()).expect("buffer size").save_with_format(path, ImageFormat::Png).map_err(err),
            c => Err(Error::Image { path: path.to_path_buf(), reason: format!("{c} channels unsupported") }),
        }
    }
}
