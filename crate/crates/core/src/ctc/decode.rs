use crate::ctc::Charset;
use crate::tensor::{argmax_first, Element};

/// CTC many-to-one map: merge runs of equal classes, then drop blanks.
pub fn collapse_alignment(path: &[usize], blank: usize) -> Vec<usize> {
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

/// Per-frame argmax over `classes` scores (ties go to the lowest index).
pub fn best_path<E: Element>(scores: &[E], classes: usize) -> Vec<usize> {
    scores.chunks(classes).map(argmax_first).collect()
}

/// Best-path decoding of one flattened sequence of `frames × (N+1)` scores
/// (logits or log-probabilities).
pub fn best_path_decode_sequence<E: Element>(scores: &[E], frames: usize, charset: &Charset) -> String {
    let classes = charset.num_classes();
    let path = best_path(&scores[..frames * classes], classes);
    charset.decode(&collapse_alignment(&path, charset.blank_index()))
}

/// Best-path decoding of a `rows × cols` lattice flattened row by row.
/// Repeats and blanks are collapsed over the whole sequence and every
/// emitted symbol is attributed to the row it was emitted in, so the rows
/// concatenate to the sequence decoding.
pub fn best_path_decode_rows<E: Element>(scores: &[E], rows: usize, cols: usize, charset: &Charset) -> Vec<String> {
    let classes = charset.num_classes();
    let blank = charset.blank_index();
    let path = best_path(&scores[..rows * cols * classes], classes);
    let mut out = vec![String::new(); rows];
    let mut prev = None;
    for (t, &k) in path.iter().enumerate() {
        if Some(k) != prev && k != blank {
            out[t / cols].push(charset.symbols()[k]);
        }
        prev = Some(k);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const B: usize = 2; // blank for a two-symbol charset {a, b}

    #[test]
    fn merges_repeats_then_drops_blanks() {
        assert_eq!(collapse_alignment(&[B, 0, 0, B, 1, 1, B], B), vec![0, 1]);
        assert_eq!(collapse_alignment(&[0, B, 0], B), vec![0, 0]);
        assert_eq!(collapse_alignment(&[B, B, B], B), Vec::<usize>::new());
    }

    #[test]
    fn one_hot_lattice_spells_word() {
        let cs = Charset::new("hi".chars()).unwrap();
        // frames: blank, h, i
        let scores = [0.0f32, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        assert_eq!(best_path_decode_sequence(&scores, 3, &cs), "hi");
    }

    #[test]
    fn uniform_scores_pick_lowest_index() {
        let cs = Charset::new("xy".chars()).unwrap();
        let scores = [0.5f32; 9];
        // every frame picks class 0 ('x'); a single run collapses to one symbol
        assert_eq!(best_path_decode_sequence(&scores, 3, &cs), "x");
    }

    #[test]
    fn rows_concatenate_to_sequence_decoding() {
        let cs = Charset::new("ab".chars()).unwrap();
        let one_hot = |k: usize| {
            let mut v = [0.0f32; 3];
            v[k] = 1.0;
            v
        };
        // rows: [a a] [a B] [b b]; the run of 'a' crosses the row boundary
        let path = [0, 0, 0, B, 1, 1];
        let scores: Vec<f32> = path.iter().flat_map(|&k| one_hot(k)).collect();
        let rows = best_path_decode_rows(&scores, 3, 2, &cs);
        assert_eq!(rows, vec!["a", "", "b"]);
        assert_eq!(rows.concat(), best_path_decode_sequence(&scores, 6, &cs));
    }
}
