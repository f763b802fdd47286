use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use span_core::ctc::{ctc_log_likelihood, ctc_loss_batch};
use span_core::data::{AugmentConfig, AugmentationPlan, Technique};
use span_core::metrics::{self, EvalReport, SampleScore};
use span_core::model::{Architecture, ForwardCtx, ModelConfig, SpanModel};
use span_core::tensor::gradcheck::{all_coordinates, check_gradients};
use span_core::tensor::ops::{self, Conv2dSpec};
use span_core::tensor::{NdArray, Tensor};

use crate::{ensure, Check};

fn log_prob_table(frames: usize, classes: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(frames * classes);
    for _ in 0..frames {
        let logits: Vec<f64> = (0..classes).map(|_| rng.random_range(-3.0..3.0)).collect();
        let z = logits.iter().map(|v| v.exp()).sum::<f64>().ln();
        out.extend(logits.iter().map(|v| v - z));
    }
    out
}

/// Many-to-one map written from scratch: merge repeats, then drop blanks.
fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != blank {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

fn enumerate_paths(lp: &[f64], frames: usize, classes: usize, label: &[usize], blank: usize) -> f64 {
    let total_paths = classes.pow(frames as u32);
    let mut sum = 0.0;
    let mut path = vec![0; frames];
    for code in 0..total_paths {
        let mut c = code;
        for slot in path.iter_mut() {
            *slot = c % classes;
            c /= classes;
        }
        if collapse(&path, blank) == label {
            sum += path.iter().enumerate().map(|(t, &k)| lp[t * classes + k]).sum::<f64>().exp();
        }
    }
    sum
}

pub fn ctc_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut infeasible = 0;
    for _ in 0..1000 {
        let symbols = rng.random_range(1..=3);
        let classes = symbols + 1;
        let frames = rng.random_range(1..=6);
        let len = rng.random_range(0..=3);
        let label: Vec<usize> = (0..len).map(|_| rng.random_range(0..symbols)).collect();
        let lp = log_prob_table(frames, classes, &mut rng);
        let want = enumerate_paths(&lp, frames, classes, &label, symbols);
        let got = ctc_log_likelihood(&lp, frames, classes, &label, symbols).map_err(|e| e.to_string())?.exp();
        if want == 0.0 {
            infeasible += 1;
        }
        worst = worst.max((want - got).abs());
    }
    ensure!(worst <= 1e-10, "max abs error {worst:.3e} > 1e-10");
    Ok(format!("1000 instances ({infeasible} infeasible), max abs error {worst:.2e}"))
}

const EPS: f64 = 1e-6;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> NdArray<f64> {
    let n = shape.iter().product();
    NdArray::from_vec(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn weighted(out: Tensor<f64>, seed: u64) -> span_core::Result<Tensor<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = Tensor::constant(random(out.shape(), &mut rng));
    Ok(ops::sum(&ops::mul(&out, &r)?))
}

pub fn gradient_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut results: Vec<(&str, f64, f64)> = Vec::new();
    let err = |e: span_core::Error| e.to_string();

    let labels = vec![vec![0, 1, 1], vec![2], vec![]];
    let inputs = [random(&[3, 8, 4], &mut rng)];
    let r = check_gradients(
        &inputs,
        EPS,
        |v| Ok(ctc_loss_batch(&ops::log_softmax_lastdim(&v[0])?, &labels, &[8, 6, 5], 3)?.loss),
        all_coordinates,
    )
    .map_err(err)?;
    results.push(("ctc", r.max_rel_error(), 1e-5));

    let inputs = [random(&[2, 3, 7, 6], &mut rng), random(&[4, 3, 3, 3], &mut rng), random(&[4], &mut rng)];
    let mut conv_worst: f64 = 0.0;
    for spec in [Conv2dSpec::new((1, 1), (1, 1)), Conv2dSpec::new((2, 1), (1, 1)), Conv2dSpec::new((2, 2), (1, 1))] {
        let r = check_gradients(&inputs, EPS, |v| weighted(ops::conv2d(&v[0], &v[1], Some(&v[2]), spec)?, 1), all_coordinates)
            .map_err(err)?;
        conv_worst = conv_worst.max(r.max_rel_error());
    }
    results.push(("conv2d", conv_worst, 1e-5));

    let inputs = [
        random(&[2, 3, 6, 5], &mut rng),
        random(&[3, 1, 3, 3], &mut rng),
        random(&[5, 3, 1, 1], &mut rng),
        random(&[5], &mut rng),
    ];
    let r = check_gradients(
        &inputs,
        EPS,
        |v| weighted(ops::depthwise_separable_conv(&v[0], &v[1], &v[2], Some(&v[3]), Conv2dSpec::new((1, 1), (1, 1)))?, 2),
        all_coordinates,
    )
    .map_err(err)?;
    results.push(("depthwise separable conv", r.max_rel_error(), 1e-5));

    let inputs = [random(&[2, 3, 4, 5], &mut rng), random(&[3], &mut rng), random(&[3], &mut rng)];
    let r = check_gradients(
        &inputs,
        EPS,
        |v| weighted(ops::instance_norm(&v[0], &v[1], &v[2], ops::INSTANCE_NORM_EPS)?, 3),
        all_coordinates,
    )
    .map_err(err)?;
    results.push(("instance norm", r.max_rel_error(), 1e-5));

    let inputs = [random(&[2, 3, 5, 4], &mut rng)];
    let r = check_gradients(&inputs, EPS, |v| weighted(ops::adaptive_max_pool_vertical(&v[0])?, 4), all_coordinates)
        .map_err(err)?;
    results.push(("vertical max pool", r.max_rel_error(), 1e-5));

    let config = ModelConfig { cb_channels: [2, 3, 3, 4, 4, 4], dscb_count: 1, dscb_channels: 4, ..ModelConfig::reduced(5) };
    let model = SpanModel::<f64>::new(Architecture::Span, config, 5).map_err(err)?;
    let mut inputs = vec![random(&[1, 3, 64, 64], &mut rng)];
    inputs.extend(model.params().iter().map(|(_, v)| v.clone()));
    let label = vec![vec![4, 0, 2]];
    let mut pick = ChaCha8Rng::seed_from_u64(8);
    let r = check_gradients(
        &inputs,
        EPS,
        |v| {
            let lattice = model.forward_with(&v[0], &v[1..], &mut ForwardCtx::<ChaCha8Rng>::eval())?;
            Ok(ctc_loss_batch(&ops::log_softmax_lastdim(&lattice.flat)?, &label, &lattice.valid_lengths, 5)?.loss)
        },
        |which, len| if which == 0 { (0..8).map(|_| pick.random_range(0..len)).collect() } else { (0..4).map(|_| pick.random_range(0..len)).collect() },
    )
    .map_err(err)?;
    results.push(("tiny span end-to-end", r.max_rel_error(), 1e-4));

    let summary: Vec<String> = results.iter().map(|(n, e, _)| format!("{n} {e:.1e}")).collect();
    let bad: Vec<&str> = results.iter().filter(|(_, e, tol)| e.is_nan() || e >= tol).map(|(n, ..)| *n).collect();
    ensure!(bad.is_empty(), "over tolerance: {bad:?}; {}", summary.join(", "));
    Ok(summary.join(", "))
}

/// Full-matrix edit distance, independent of the rolling-row version.
fn dp_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn random_text(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[char] = &['a', 'b', 'c', 'd', ' ', ' ', '\n', 'é'];
    (0..rng.random_range(0..30)).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect()
}

pub fn metrics_oracle() -> Check {
    let kitten = dp_distance(&['k', 'i', 't', 't', 'e', 'n'], &['s', 'i', 't', 't', 'i', 'n', 'g']);
    ensure!(kitten == 3, "oracle kitten/sitting = {kitten}");
    let got = metrics::char_edits("kitten", "sitting").0;
    ensure!(got == 3, "kitten/sitting = {got}");

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut samples = Vec::new();
    for i in 0..1000 {
        let (gt, pred) = (random_text(&mut rng), random_text(&mut rng));
        // line breaks count as spaces
        let gt_chars: Vec<char> = gt.chars().map(|c| if c == '\n' { ' ' } else { c }).collect();
        let pred_chars: Vec<char> = pred.chars().map(|c| if c == '\n' { ' ' } else { c }).collect();
        let gt_words: Vec<&str> = gt.split_whitespace().collect();
        let pred_words: Vec<&str> = pred.split_whitespace().collect();
        let s = SampleScore::new(i.to_string(), &gt, &pred);
        let ce = dp_distance(&gt_chars, &pred_chars);
        let we = dp_distance(&gt_words, &pred_words);
        ensure!(s.char_edits == ce && s.gt_chars == gt_chars.len(), "pair {i}: char edits {} vs {ce}", s.char_edits);
        ensure!(s.word_edits == we && s.gt_words == gt_words.len(), "pair {i}: word edits {} vs {we}", s.word_edits);
        let cer = ce as f64 / gt_chars.len().max(1) as f64;
        let wer = we as f64 / gt_words.len().max(1) as f64;
        ensure!(s.cer == cer && s.wer == wer, "pair {i}: rates {} {} vs {cer} {wer}", s.cer, s.wer);
        samples.push(s);
    }
    let report = EvalReport::from_samples(samples);
    let edits: usize = report.samples.iter().map(|s| s.char_edits).sum();
    let chars: usize = report.samples.iter().map(|s| s.gt_chars).sum();
    let weighted: f64 = report.samples.iter().map(|s| s.cer * s.gt_chars as f64).sum::<f64>() / chars as f64;
    ensure!(report.cer == edits as f64 / chars as f64, "micro CER {} vs {edits}/{chars}", report.cer);
    ensure!((report.cer - weighted).abs() < 1e-12 || report.samples.iter().any(|s| s.gt_chars == 0), "weighted mean differs");
    let word_edits: usize = report.samples.iter().map(|s| s.word_edits).sum();
    let words: usize = report.samples.iter().map(|s| s.gt_words).sum();
    ensure!(report.wer == word_edits as f64 / words as f64, "micro WER {} vs {word_edits}/{words}", report.wer);
    Ok(format!("1000 pairs agree; kitten/sitting = 3; corpus CER {:.4} = {edits}/{chars}", report.cer))
}

pub fn augmentation_statistics() -> Check {
    let cfg = AugmentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut counts: HashMap<Technique, usize> = HashMap::new();
    let mut collisions = 0;
    const PLANS: usize = 100_000;
    let exclusive = [Technique::Perspective, Technique::Elastic, Technique::Projective];
    for _ in 0..PLANS {
        let plan = AugmentationPlan::draw(&cfg, &mut rng);
        let active = plan.active();
        for &t in &active {
            *counts.entry(t).or_default() += 1;
        }
        if active.iter().filter(|t| exclusive.contains(t)).count() > 1 {
            collisions += 1;
        }
    }
    let mut parts = Vec::new();
    let mut off = Vec::new();
    for t in Technique::ALL {
        let f = counts.get(&t).copied().unwrap_or(0) as f64 / PLANS as f64;
        parts.push(format!("{} {f:.4}", t.name()));
        if (f - 0.2).abs() > 0.01 {
            off.push(t.name());
        }
    }
    ensure!(off.is_empty() && collisions == 0, "off target {off:?}, {collisions} collisions; {}", parts.join(", "));
    Ok(format!("{}; 0 collisions", parts.join(", ")))
}
