use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY_SPEC: &str = r#"
line_count = [1, 2]
chars_per_line = [2, 3]
glyphs = "ab "
line_spacing = [52, 60]
"#;

fn span(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_span"))
        .args(args)
        .arg("--verbosity=error")
        .output()
        .expect("spawn span")
}

fn stdout_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).trim().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, spec: &str, count: usize, seed: u64) -> Output {
    let spec_path = dir.with_extension("toml");
    fs::write(&spec_path, spec).unwrap();
    span(&["generate", "--spec", s(&spec_path), "--count", &count.to_string(), "--out", s(dir), "--seed", &seed.to_string()])
}

fn dir_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().into(), fs::read(&p).unwrap()))
        .collect();
    entries.sort();
    entries
}

#[test]
fn generate_writes_requested_pages_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = generate(&a, TINY_SPEC, 10, 5);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(PathBuf::from(stdout_line(&out)), a.join("manifest.tsv"));
    let manifest = fs::read_to_string(a.join("manifest.tsv")).unwrap();
    assert_eq!(manifest.lines().count(), 10);
    assert!(generate(&b, TINY_SPEC, 10, 5).status.success());
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
}

#[test]
fn unsupported_glyph_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let out = generate(&tmp.path().join("x"), "glyphs = \"ab\u{00e9}\"\n", 2, 0);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains('\u{00e9}'));
}

#[test]
fn pretrained_regime_without_init_is_a_usage_error() {
    let out = span(&["train", "--regime", "span-pt-r", "--data", "m.tsv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--init"));
}

#[test]
fn unknown_or_missing_regime_lists_valid_names() {
    for args in [&["train", "--regime", "bogus"][..], &["train"][..]] {
        let out = span(args);
        assert_eq!(out.status.code(), Some(2));
        let err = String::from_utf8_lossy(&out.stderr);
        for name in ["pool-line-r", "span-line-ra", "span-scratch", "span-pt-r", "span-pt-ra"] {
            assert!(err.contains(name), "{err}");
        }
    }
}

#[test]
fn corrupt_checkpoint_and_unreadable_image_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = tmp.path().join("bad.ckpt");
    fs::write(&ckpt, b"SPANCKPT garbage").unwrap();
    let img = tmp.path().join("img.png");
    fs::write(&img, b"not a png").unwrap();
    let out = span(&["predict", "--ckpt", s(&ckpt), "--image", s(&img)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn train_eval_predict_visualize_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(generate(&data, TINY_SPEC, 4, 1).status.success());
    let manifest = data.join("manifest.tsv");
    let run = tmp.path().join("run");
    let out = span(&[
        "train", "--regime", "span-scratch", "--data", s(&manifest), "--val", s(&manifest), "--out", s(&run),
        "--model-size", "reduced", "--max-steps", "2", "--batch-size", "2", "--eval-every", "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt = PathBuf::from(stdout_line(&out));
    assert!(ckpt.exists());
    let log = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(log.lines().next().unwrap(), "step,ctc_loss,val_cer,wall_time_s");
    assert!(log.lines().count() >= 3);

    let report = tmp.path().join("report.json");
    let out = span(&["eval", "--ckpt", s(&ckpt), "--data", s(&manifest), "--report", s(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(&report).unwrap().contains("\"cer\""));

    let image = data.join("page_00000.png");
    let out = span(&["predict", "--ckpt", s(&ckpt), "--image", s(&image)]);
    assert!(out.status.success());
    let predicted = String::from_utf8_lossy(&out.stdout).trim_end_matches('\n').to_string();

    let overlay = tmp.path().join("overlay.png");
    let out = span(&["visualize", "--ckpt", s(&ckpt), "--image", s(&image), "--out", s(&overlay)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = fs::read_to_string(overlay.with_extension("rows.txt")).unwrap();
    let joined: String = rows.lines().filter_map(|l| l.split_once('\t')).map(|(_, t)| t).collect();
    assert_eq!(joined, predicted);
}
