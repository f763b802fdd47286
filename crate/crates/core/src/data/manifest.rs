//! Tab-separated dataset manifests.
//!
//! One record per line: `relative_image_path<TAB>transcription`. Lines
//! starting with `#` and blank lines are ignored. Inside a transcription the
//! escapes `\\`, `\t` and `\n` are recognized; line breaks (escaped or a
//! stray `\r`) become single spaces since labels never carry them.

use std::fs;
use std::path::{Path, PathBuf};

use crate::ctc::Charset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub image: PathBuf,
    pub transcription: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    /// Directory that record paths are relative to.
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn resolve(&self, record: &ManifestRecord) -> PathBuf {
        self.root.join(&record.image)
    }

    pub fn transcriptions(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.transcription.as_str())
    }

    /// Charset made of every character seen in the transcriptions.
    pub fn infer_charset(&self) -> Result<Charset> {
        Charset::from_texts(self.transcriptions())
    }
}

fn unescape(field: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some('\\') => out.push('\\'),
                Some('t') => out.push('\t'),
                Some('n') | Some('r') => out.push(' '),
                Some(other) => return Err(format!("unknown escape \\{other}")),
                None => return Err("dangling backslash".into()),
            },
            '\r' | '\n' => out.push(' '),
            c => out.push(c),
        }
    }
    Ok(out)
}

fn escape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' | '\r' => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

/// Parses manifest text without touching the file system.
pub fn parse_manifest(text: &str, root: impl Into<PathBuf>, origin: &Path) -> Result<Manifest> {
    let mut records = Vec::new();
    let mut issues = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((path, text)) = line.split_once('\t') else {
            issues.push(format!("line {lineno}: expected path<TAB>transcription"));
            continue;
        };
        if path.is_empty() {
            issues.push(format!("line {lineno}: empty image path"));
            continue;
        }
        match unescape(text) {
            Ok(transcription) => records.push(ManifestRecord { image: PathBuf::from(path), transcription }),
            Err(reason) => issues.push(format!("line {lineno}: {reason}")),
        }
    }
    if !issues.is_empty() {
        return Err(Error::ManifestIssues { path: origin.to_path_buf(), issues });
    }
    Ok(Manifest { root: root.into(), records })
}

/// Reads a manifest and checks that every referenced image exists.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = parse_manifest(&text, root, path)?;
    let missing: Vec<String> = manifest
        .records
        .iter()
        .filter(|r| !manifest.resolve(r).is_file())
        .map(|r| format!("missing image file {}", manifest.resolve(r).display()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::ManifestIssues { path: path.to_path_buf(), issues: missing });
    }
    Ok(manifest)
}

/// Lists every transcription character that `charset` lacks, one issue per
/// record and character.
pub fn validate_charset(manifest: &Manifest, charset: &Charset, origin: &Path) -> Result<()> {
    let mut issues = Vec::new();
    for r in &manifest.records {
        let mut seen = Vec::new();
        for ch in r.transcription.chars() {
            if !charset.contains(ch) && !seen.contains(&ch) {
                seen.push(ch);
                issues.push(format!("{}: character {ch:?} is outside the charset", r.image.display()));
            }
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(Error::ManifestIssues { path: origin.to_path_buf(), issues })
    }
}

pub fn format_manifest(records: &[ManifestRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.image.to_string_lossy());
        out.push('\t');
        out.push_str(&escape(&r.transcription));
        out.push('\n');
    }
    out
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_manifest(records)).map_err(|e| Error::io(path, e))
}
