//! Character and word error rates.
//!
//! Both are Levenshtein distances (unit costs) normalized by the ground-truth
//! length. Characters are Unicode code points; words are runs of
//! non-whitespace. Line breaks are replaced by a space before scoring. An
//! empty ground truth scores `edits / 1`, so an empty pair scores 0.

use serde::{Deserialize, Serialize};

/// Edit distance with unit insertion, deletion and substitution costs.
/// Uses two rolling rows, `O(|a|·|b|)` time and `O(|b|)` memory.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Replaces line breaks with single spaces.
pub fn strip_line_breaks(text: &str) -> String {
    let text = text.replace("\r\n", " ");
    text.chars().map(|c| if matches!(c, '\n' | '\r' | '\u{2028}' | '\u{2029}') { ' ' } else { c }).collect()
}

pub fn chars(text: &str) -> Vec<char> {
    strip_line_breaks(text).chars().collect()
}

pub fn words(text: &str) -> Vec<String> {
    strip_line_breaks(text).split_whitespace().map(str::to_owned).collect()
}

fn rate(edits: usize, len: usize) -> f64 {
    edits as f64 / len.max(1) as f64
}

pub fn char_edits(gt: &str, pred: &str) -> (usize, usize) {
    let g = chars(gt);
    (levenshtein(&g, &chars(pred)), g.len())
}

pub fn word_edits(gt: &str, pred: &str) -> (usize, usize) {
    let g = words(gt);
    (levenshtein(&g, &words(pred)), g.len())
}

pub fn cer(gt: &str, pred: &str) -> f64 {
    let (e, n) = char_edits(gt, pred);
    rate(e, n)
}

pub fn wer(gt: &str, pred: &str) -> f64 {
    let (e, n) = word_edits(gt, pred);
    rate(e, n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: String,
    pub ground_truth: String,
    pub prediction: String,
    pub char_edits: usize,
    pub gt_chars: usize,
    pub word_edits: usize,
    pub gt_words: usize,
    pub cer: f64,
    pub wer: f64,
}

impl SampleScore {
    pub fn new(id: impl Into<String>, ground_truth: &str, prediction: &str) -> Self {
        let (ce, cn) = char_edits(ground_truth, prediction);
        let (we, wn) = word_edits(ground_truth, prediction);
        Self {
            id: id.into(),
            ground_truth: ground_truth.to_owned(),
            prediction: prediction.to_owned(),
            char_edits: ce,
            gt_chars: cn,
            word_edits: we,
            gt_words: wn,
            cer: rate(ce, cn),
            wer: rate(we, wn),
        }
    }
}

/// Corpus scores. `cer`/`wer` are micro-averages (edit sums over length
/// sums); `mean_sample_cer`/`mean_sample_wer` average the per-sample rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cer: f64,
    pub wer: f64,
    pub mean_sample_cer: f64,
    pub mean_sample_wer: f64,
    pub total_edit_chars: usize,
    pub total_gt_chars: usize,
    pub total_edit_words: usize,
    pub total_gt_words: usize,
    pub samples: Vec<SampleScore>,
}

impl EvalReport {
    pub fn from_samples(samples: Vec<SampleScore>) -> Self {
        let sum = |f: fn(&SampleScore) -> usize| samples.iter().map(f).sum::<usize>();
        let total_edit_chars = sum(|s| s.char_edits);
        let total_gt_chars = sum(|s| s.gt_chars);
        let total_edit_words = sum(|s| s.word_edits);
        let total_gt_words = sum(|s| s.gt_words);
        let mean = |f: fn(&SampleScore) -> f64| {
            if samples.is_empty() {
                0.0
            } else {
                samples.iter().map(f).sum::<f64>() / samples.len() as f64
            }
        };
        Self {
            cer: rate(total_edit_chars, total_gt_chars),
            wer: rate(total_edit_words, total_gt_words),
            mean_sample_cer: mean(|s| s.cer),
            mean_sample_wer: mean(|s| s.wer),
            total_edit_chars,
            total_gt_chars,
            total_edit_words,
            total_gt_words,
            samples,
        }
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>) -> Self {
        Self::from_samples(pairs.into_iter().map(|(id, gt, pred)| SampleScore::new(id, gt, pred)).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        format!(
            "samples {}  CER {:.4} ({}/{})  WER {:.4} ({}/{})  mean sample CER {:.4}  mean sample WER {:.4}",
            self.samples.len(),
            self.cer,
            self.total_edit_chars,
            self.total_gt_chars,
            self.wer,
            self.total_edit_words,
            self.total_gt_words,
            self.mean_sample_cer,
            self.mean_sample_wer
        )
    }
}
