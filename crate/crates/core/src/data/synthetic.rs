//! Synthetic paragraph pages rendered with the embedded bitmap font.
//!
//! Each sample draws its own RNG stream from `(seed, index)`, so pages are
//! reproducible individually and regenerating a dataset is bit-identical.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::font::{glyph, GLYPH_HEIGHT, GLYPH_WIDTH};
use crate::data::image::RawImage;
use crate::data::manifest::{write_manifest, ManifestRecord};
use crate::data::preprocess::MIN_RAW_EXTENT;
use crate::error::{Error, Result};

/// Generator configuration; TOML keys match the field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Inclusive range of lines per page.
    pub line_count: (usize, usize),
    /// Inclusive range of characters per line.
    pub chars_per_line: (usize, usize),
    /// Symbols to draw from; space acts as a word separator.
    pub glyphs: String,
    /// Raw pixels per font pixel.
    pub glyph_scale: usize,
    /// Blank pixels between neighboring glyph cells.
    pub char_spacing: usize,
    /// Inclusive range of the vertical gap between consecutive lines.
    pub line_spacing: (usize, usize),
    /// Inclusive range of extra blank pixels above the first line, so
    /// that lines do not always start at the same lattice-row phase.
    pub top_offset: (usize, usize),
    /// Range of the per-line downward slope in degrees.
    pub skew_deg: (f64, f64),
    /// Half-width of the uniform pixel noise.
    pub noise: f64,
    pub background: u8,
    pub ink: u8,
    pub margin: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            line_count: (2, 4),
            chars_per_line: (4, 8),
            glyphs: "abcdefghi ".into(),
            glyph_scale: 4,
            char_spacing: 12,
            line_spacing: (52, 100),
            top_offset: (0, 0),
            skew_deg: (0.0, 0.0),
            noise: 8.0,
            background: 255,
            ink: 0,
            margin: 16,
        }
    }
}

impl SyntheticSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_toml(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn symbols(&self) -> Vec<char> {
        let mut out: Vec<char> = Vec::new();
        for c in self.glyphs.chars() {
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        for c in self.glyphs.chars() {
            if glyph(c).is_none() {
                return Err(Error::UnsupportedGlyph(c));
            }
        }
        if !self.glyphs.chars().any(|c| c != ' ') {
            return bad("glyphs must contain at least one non-space symbol");
        }
        if self.line_count.0 == 0 || self.line_count.0 > self.line_count.1 {
            return bad("line_count must be a nonempty range starting at 1 or more");
        }
        if self.chars_per_line.0 == 0 || self.chars_per_line.0 > self.chars_per_line.1 {
            return bad("chars_per_line must be a nonempty range starting at 1 or more");
        }
        if self.line_spacing.0 < 1 || self.line_spacing.0 > self.line_spacing.1 {
            return bad("line_spacing must be at least 1 px and ordered");
        }
        if self.top_offset.0 > self.top_offset.1 {
            return bad("top_offset must be ordered");
        }
        let (s0, s1) = self.skew_deg;
        if !(0.0..45.0).contains(&s0) || !(s0..45.0).contains(&s1) {
            return bad("skew_deg must satisfy 0 <= min <= max < 45");
        }
        if self.glyph_scale == 0 {
            return bad("glyph_scale must be positive");
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return bad("noise must be a non-negative number");
        }
        Ok(())
    }

    fn advance(&self) -> usize {
        GLYPH_WIDTH * self.glyph_scale + self.char_spacing
    }

    fn line_height(&self) -> usize {
        GLYPH_HEIGHT * self.glyph_scale
    }
}

/// Raw-pixel ink box of one rendered line (bottom and right exclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineBox {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageLayout {
    pub lines: Vec<String>,
    pub boxes: Vec<LineBox>,
    pub skew_deg: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticPage {
    pub image: RawImage,
    pub transcription: String,
    pub layout: PageLayout,
}

/// RNG stream of sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn random_line<R: Rng + ?Sized>(spec: &SyntheticSpec, symbols: &[char], rng: &mut R) -> String {
    let letters: Vec<char> = symbols.iter().copied().filter(|&c| c != ' ').collect();
    let n = rng.random_range(spec.chars_per_line.0..=spec.chars_per_line.1);
    let mut line = Vec::with_capacity(n);
    for i in 0..n {
        // no leading, trailing or doubled spaces
        let edge = i == 0 || i + 1 == n || line.last() == Some(&' ');
        let pool = if edge { &letters } else { symbols };
        line.push(pool[rng.random_range(0..pool.len())]);
    }
    line.into_iter().collect()
}

/// Renders one page with the given RNG.
pub fn render_page<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<SyntheticPage> {
    spec.validate()?;
    let symbols = spec.symbols();
    let n_lines = rng.random_range(spec.line_count.0..=spec.line_count.1);
    let lines: Vec<String> = (0..n_lines).map(|_| random_line(spec, &symbols, rng)).collect();
    let skews: Vec<f64> = (0..n_lines)
        .map(|_| if spec.skew_deg.1 > spec.skew_deg.0 { rng.random_range(spec.skew_deg.0..=spec.skew_deg.1) } else { spec.skew_deg.0 })
        .collect();
    let gaps: Vec<usize> = (1..n_lines).map(|_| rng.random_range(spec.line_spacing.0..=spec.line_spacing.1)).collect();
    let offset = rng.random_range(spec.top_offset.0..=spec.top_offset.1);

    let advance = spec.advance();
    let max_text_w = spec.chars_per_line.1 * advance - spec.char_spacing;
    let width = (max_text_w + 2 * spec.margin).max(MIN_RAW_EXTENT.1);
    let drops: Vec<usize> = lines
        .iter()
        .zip(&skews)
        .map(|(l, s)| {
            let w = l.chars().count() * advance;
            (w as f64 * s.to_radians().tan()).ceil() as usize
        })
        .collect();
    let mut tops = Vec::with_capacity(n_lines);
    let mut y = spec.margin + offset;
    for i in 0..n_lines {
        tops.push(y);
        y += spec.line_height() + drops[i];
        if i + 1 < n_lines {
            y += gaps[i];
        }
    }
    let height = (y + spec.margin).max(MIN_RAW_EXTENT.0);

    let mut ink = vec![false; height * width];
    let mut boxes = Vec::with_capacity(n_lines);
    let scale = spec.glyph_scale;
    for (li, line) in lines.iter().enumerate() {
        let slope = skews[li].to_radians().tan();
        let mut bbox = LineBox { top: usize::MAX, bottom: 0, left: usize::MAX, right: 0 };
        for (ci, ch) in line.chars().enumerate() {
            let bitmap = glyph(ch).ok_or(Error::UnsupportedGlyph(ch))?;
            let x0 = spec.margin + ci * advance;
            for (gy, row) in bitmap.iter().enumerate() {
                for (gx, &on) in row.iter().enumerate() {
                    if !on {
                        continue;
                    }
                    for dx in 0..scale {
                        let x = x0 + gx * scale + dx;
                        let shift = ((x - spec.margin) as f64 * slope).round() as usize;
                        for dy in 0..scale {
                            let yy = tops[li] + gy * scale + dy + shift;
                            ink[yy * width + x] = true;
                            bbox.top = bbox.top.min(yy);
                            bbox.bottom = bbox.bottom.max(yy + 1);
                            bbox.left = bbox.left.min(x);
                            bbox.right = bbox.right.max(x + 1);
                        }
                    }
                }
            }
        }
        if bbox.top == usize::MAX {
            bbox = LineBox { top: tops[li], bottom: tops[li], left: spec.margin, right: spec.margin };
        }
        boxes.push(bbox);
    }

    let (bg, fg) = (spec.background as f64, spec.ink as f64);
    let data = ink
        .iter()
        .map(|&on| {
            let base = if on { fg } else { bg };
            let n = if spec.noise > 0.0 { rng.random_range(-spec.noise..=spec.noise) } else { 0.0 };
            (base + n).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok(SyntheticPage {
        image: RawImage::gray(height, width, data),
        transcription: lines.join(" "),
        layout: PageLayout { lines, boxes, skew_deg: skews },
    })
}

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const SPEC_FILE: &str = "spec.toml";
pub const LAYOUT_FILE: &str = "layout.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub image: PathBuf,
    pub height: usize,
    pub width: usize,
    pub layout: PageLayout,
}

/// In-memory generation of `count` pages.
pub fn generate_pages(spec: &SyntheticSpec, count: usize, seed: u64) -> Result<Vec<SyntheticPage>> {
    spec.validate()?;
    (0..count).map(|i| render_page(spec, &mut sample_rng(seed, i as u64))).collect()
}

/// Writes `count` PNG pages, the manifest, a copy of the spec and the line
/// layout into `out`. Returns the manifest path.
pub fn generate_synthetic(spec: &SyntheticSpec, count: usize, seed: u64, out: &Path) -> Result<PathBuf> {
    spec.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let digits = count.saturating_sub(1).to_string().len().max(5);
    let mut records = Vec::with_capacity(count);
    let mut layouts = Vec::with_capacity(count);
    for i in 0..count {
        let page = render_page(spec, &mut sample_rng(seed, i as u64))?;
        let name = PathBuf::from(format!("page_{i:0digits$}.png"));
        page.image.save(out.join(&name))?;
        layouts.push(LayoutEntry { image: name.clone(), height: page.image.height, width: page.image.width, layout: page.layout });
        records.push(ManifestRecord { image: name, transcription: page.transcription });
    }
    let manifest = out.join(MANIFEST_FILE);
    write_manifest(&manifest, &records)?;
    let spec_path = out.join(SPEC_FILE);
    fs::write(&spec_path, format!("# seed = {seed}, count = {count}\n{}", spec.to_toml())).map_err(|e| Error::io(&spec_path, e))?;
    let layout_path = out.join(LAYOUT_FILE);
    let json = serde_json::to_string_pretty(&layouts).expect("layout serializes");
    fs::write(&layout_path, json).map_err(|e| Error::io(&layout_path, e))?;
    Ok(manifest)
}

pub fn load_layouts(dir: &Path) -> Result<Vec<LayoutEntry>> {
    let path = dir.join(LAYOUT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
