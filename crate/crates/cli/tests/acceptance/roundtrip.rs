use std::fs;
use std::path::Path;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use span_core::ctc::Charset;
use span_core::data::manifest::{format_manifest, parse_manifest};
use span_core::data::{write_manifest, ManifestRecord};
use span_core::model::{Architecture, Checkpoint, ModelConfig, SpanModel};
use span_core::tensor::ops::{collapse_rows, uncollapse_rows};
use span_core::tensor::{NdArray, Tensor};

use crate::{ensure, Check};

fn checkpoint(dir: &Path) -> Check {
    let charset = Charset::new("abcdefghi ".chars()).map_err(|e| e.to_string())?;
    let model = SpanModel::<f32>::new(Architecture::Span, ModelConfig::reduced(charset.len()), 4).map_err(|e| e.to_string())?;
    let ckpt = Checkpoint::from_model(&model, &charset, None, None).map_err(|e| e.to_string())?;
    let (a, b) = (dir.join("a.ckpt"), dir.join("b.ckpt"));
    ckpt.save(&a).map_err(|e| e.to_string())?;
    let loaded = Checkpoint::load(&a).map_err(|e| e.to_string())?;
    loaded.to_model::<f32>().map_err(|e| e.to_string())?;
    loaded.save(&b).map_err(|e| e.to_string())?;
    let (x, y) = (fs::read(&a).map_err(|e| e.to_string())?, fs::read(&b).map_err(|e| e.to_string())?);
    ensure!(x == y, "checkpoint bytes differ after save/load/save");
    Ok(format!("checkpoint {} bytes identical", x.len()))
}

fn collapse() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let dims = [rng.random_range(1..3), rng.random_range(1..8), rng.random_range(1..6), rng.random_range(1..10)];
        let [n, c, h, w] = dims;
        let data: Vec<f32> = (0..n * c * h * w).map(|_| rng.random()).collect();
        let grid = NdArray::from_vec(dims.to_vec(), data).unwrap();
        let flat = collapse_rows(&Tensor::constant(grid.clone())).map_err(|e| e.to_string())?;
        ensure!(flat.shape() == [n, h * w, c], "flat shape {:?}", flat.shape());
        // frame r*w + x of sample i holds column (r, x) of the grid
        let (g, f) = (grid.data(), flat.value().data());
        for i in 0..n {
            for r in 0..h {
                for x in 0..w {
                    for k in 0..c {
                        ensure!(f[(i * h * w + r * w + x) * c + k] == g[((i * c + k) * h + r) * w + x], "frame order");
                    }
                }
            }
        }
        let back = uncollapse_rows(flat.value(), h, w).map_err(|e| e.to_string())?;
        ensure!(back == grid, "uncollapse differs for {dims:?}");
    }
    Ok("collapse/uncollapse identity on 50 grids".into())
}

fn manifest(dir: &Path) -> Check {
    let records: Vec<ManifestRecord> = [
        ("page_00000.png", "abc def"),
        ("sub/dir/page 1.png", "tab\there"),
        ("x.png", r"back\slash"),
        ("y.png", ""),
        ("z.png", "ünïcödé ✓"),
    ]
    .iter()
    .map(|(p, t)| ManifestRecord { image: p.into(), transcription: t.to_string() })
    .collect();
    let path = dir.join("manifest.tsv");
    write_manifest(&path, &records).map_err(|e| e.to_string())?;
    let text = fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let parsed = parse_manifest(&text, dir, &path).map_err(|e| e.to_string())?;
    ensure!(parsed.records == records, "records differ after write/read");
    ensure!(format_manifest(&parsed.records) == text, "rewritten text differs");
    Ok(format!("manifest of {} records identical", records.len()))
}

fn generate(dir: &Path) -> Check {
    let run = |out: &Path, seed: &str| {
        Command::new(env!("CARGO_BIN_EXE_span"))
            .args(["generate", "--count", "12", "--seed", seed, "--verbosity", "error", "--out"])
            .arg(out)
            .output()
            .map(|o| o.status)
            .map_err(|e| e.to_string())
    };
    let (a, b, c) = (dir.join("gen_a"), dir.join("gen_b"), dir.join("gen_c"));
    for (out, seed) in [(&a, "9"), (&b, "9"), (&c, "10")] {
        ensure!(run(out, seed)?.success(), "span generate failed for {}", out.display());
    }
    let snapshot = |d: &Path| -> Result<Vec<(String, Vec<u8>)>, String> {
        let mut files = Vec::new();
        for e in fs::read_dir(d).map_err(|e| e.to_string())? {
            let p = e.map_err(|e| e.to_string())?.path();
            files.push((p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).map_err(|e| e.to_string())?));
        }
        files.sort();
        Ok(files)
    };
    let (sa, sb, sc) = (snapshot(&a)?, snapshot(&b)?, snapshot(&c)?);
    ensure!(sa == sb, "same-seed directories differ");
    ensure!(sa != sc, "different seeds produced identical directories");
    Ok(format!("generate: {} files byte-identical for equal seeds", sa.len()))
}

pub fn round_trips() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let parts = [checkpoint(tmp.path())?, collapse()?, manifest(tmp.path())?, generate(tmp.path())?];
    Ok(parts.join("; "))
}
